#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "flowrl/benchkit/benchkit.hpp"
#include "flowrl/datapipe/datapipe.hpp"
#include "flowrl/rewardkit/judge.hpp"
#include "flowrl/toyenv/pipeline.hpp"

namespace flowrl::svc {

struct PathsConfig {
  std::string run_dir = "runs/default";
  std::string annotation_dir = "annotations";
  std::string static_dir = "candidates";
};

struct ServeConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  int lease_minutes = 30;
  int compact_every = 1000;  // events between automatic log compactions; 0 disables
};

/// Every tunable in one document. Loading rejects keys the defaults do not have.
struct RunConfig {
  std::uint64_t seed = 0;
  toy::RlRunConfig rl{};
  reward::JudgeClientConfig judge{};
  data::FilterConfig filter{};
  bench::TiePolicy tie_policy = bench::TiePolicy::kHalfCredit;
  int bestofn_n = 8;
  PathsConfig paths{};
  ServeConfig serve{};

  void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

/// Throws ConfigError naming the first key in `doc` that `reference` lacks.
/// Objects are compared recursively; arrays and scalars are leaves.
void reject_unknown_keys(const nlohmann::json& doc, const nlohmann::json& reference, const std::string& where = "");

/// Parses, checks keys against the defaults, validates.
RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace flowrl::svc
