#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include <nlohmann/json.hpp>

#include "flowrl/flowcore/velocity_field.hpp"

namespace flowrl {

/// Checkpoint container, version 1:
///
///   line 1  "FLOWRL-CKPT 1"
///   line 2  one-line JSON header: {"architecture": {...}, "seed": N,
///           "num_parameters": P, "encoding": "f64le", "meta": {...}}
///   rest    P IEEE-754 doubles, little-endian, in parameter order
///
/// Parameter order is layer by layer: weight matrix (column-major, out x in)
/// followed by the bias vector.
struct Checkpoint {
  Architecture architecture;
  Vector parameters;
  std::uint64_t seed = 0;
  nlohmann::json meta = nlohmann::json::object();

  VelocityField to_model() const { return VelocityField(architecture, parameters); }
  static Checkpoint from_model(const VelocityField& m, std::uint64_t seed, nlohmann::json meta = nlohmann::json::object());
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace flowrl
