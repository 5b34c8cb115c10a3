#include "flowrl/flowcore/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "flowrl/common/error.hpp"

namespace flowrl {

namespace {

constexpr const char* kMagic = "FLOWRL-CKPT 1";

void put_f64le(std::ostream& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(buf, 8);
}

double get_f64le(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw IoError("checkpoint: truncated parameter block");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

Checkpoint Checkpoint::from_model(const VelocityField& m, std::uint64_t seed, nlohmann::json meta) {
  return {m.architecture(), m.parameters(), seed, std::move(meta)};
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  if (static_cast<std::size_t>(ckpt.parameters.size()) != ckpt.architecture.num_parameters())
    throw ValidationError("checkpoint: parameter count does not match architecture");
  nlohmann::json header{{"architecture", ckpt.architecture},
                        {"seed", ckpt.seed},
                        {"num_parameters", ckpt.parameters.size()},
                        {"encoding", "f64le"},
                        {"meta", ckpt.meta}};
  out << kMagic << '\n' << header.dump() << '\n';
  for (Eigen::Index i = 0; i < ckpt.parameters.size(); ++i) put_f64le(out, ckpt.parameters[i]);
  if (!out) throw IoError("checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  std::string magic, header_line;
  if (!std::getline(in, magic) || magic != kMagic) throw ParseError("checkpoint: bad magic line", magic);
  if (!std::getline(in, header_line)) throw ParseError("checkpoint: missing header", {});
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("checkpoint: malformed header: ") + e.what(), header_line);
  }
  if (header.value("encoding", std::string()) != "f64le") throw ParseError("checkpoint: unsupported encoding", header_line);
  Checkpoint c;
  c.architecture = header.at("architecture").get<Architecture>();
  c.seed = header.value("seed", std::uint64_t{0});
  c.meta = header.value("meta", nlohmann::json::object());
  const auto n = header.at("num_parameters").get<std::size_t>();
  if (n != c.architecture.num_parameters()) throw ParseError("checkpoint: parameter count disagrees with architecture", header_line);
  c.parameters.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) c.parameters[static_cast<Eigen::Index>(i)] = get_f64le(in);
  if (!c.parameters.allFinite()) throw ParseError("checkpoint: non-finite parameter", header_line);
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  auto c = read_checkpoint(in);
  if (in.peek() != std::char_traits<char>::eof()) throw IoError("checkpoint: trailing bytes in " + path.string());
  return c;
}

}  // namespace flowrl
