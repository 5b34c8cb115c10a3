#include "flowrl/svc/config.hpp"

#include "flowrl/common/error.hpp"
#include "flowrl/common/jsonl.hpp"

namespace flowrl::svc {

using nlohmann::json;

void RunConfig::validate() const {
  rl.validate();
  judge.validate();
  filter.validate();
  if (bestofn_n < 1) throw ConfigError("bestofn_n must be >= 1");
  if (serve.port < 0 || serve.port > 65535) throw ConfigError("serve.port out of range");
  if (serve.lease_minutes < 1) throw ConfigError("serve.lease_minutes must be >= 1");
  if (serve.compact_every < 0) throw ConfigError("serve.compact_every must be >= 0");
}

void to_json(json& j, const RunConfig& c) {
  j = json{{"seed", c.seed},
           {"rl", c.rl},
           {"judge", c.judge},
           {"filter", c.filter},
           {"tie_policy", c.tie_policy == bench::TiePolicy::kHalfCredit ? "half" : "strict"},
           {"bestofn_n", c.bestofn_n},
           {"paths",
            {{"run_dir", c.paths.run_dir},
             {"annotation_dir", c.paths.annotation_dir},
             {"static_dir", c.paths.static_dir}}},
           {"serve",
            {{"host", c.serve.host},
             {"port", c.serve.port},
             {"lease_minutes", c.serve.lease_minutes},
             {"compact_every", c.serve.compact_every}}}};
}

void from_json(const json& j, RunConfig& c) {
  RunConfig d;
  c.seed = j.value("seed", d.seed);
  c.rl = j.contains("rl") ? j.at("rl").get<toy::RlRunConfig>() : d.rl;
  c.judge = j.contains("judge") ? j.at("judge").get<reward::JudgeClientConfig>() : d.judge;
  c.filter = j.contains("filter") ? j.at("filter").get<data::FilterConfig>() : d.filter;
  const auto tie = j.value("tie_policy", std::string("half"));
  if (tie != "half" && tie != "strict") throw ConfigError("tie_policy must be 'half' or 'strict'");
  c.tie_policy = tie == "half" ? bench::TiePolicy::kHalfCredit : bench::TiePolicy::kStrict;
  c.bestofn_n = j.value("bestofn_n", d.bestofn_n);
  const json p = j.value("paths", json::object());
  c.paths.run_dir = p.value("run_dir", d.paths.run_dir);
  c.paths.annotation_dir = p.value("annotation_dir", d.paths.annotation_dir);
  c.paths.static_dir = p.value("static_dir", d.paths.static_dir);
  const json s = j.value("serve", json::object());
  c.serve.host = s.value("host", d.serve.host);
  c.serve.port = s.value("port", d.serve.port);
  c.serve.lease_minutes = s.value("lease_minutes", d.serve.lease_minutes);
  c.serve.compact_every = s.value("compact_every", d.serve.compact_every);
}

void reject_unknown_keys(const json& doc, const json& reference, const std::string& where) {
  if (!doc.is_object() || !reference.is_object()) return;
  for (const auto& [key, value] : doc.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!reference.contains(key)) throw ConfigError("unknown configuration key '" + path + "'");
    reject_unknown_keys(value, reference.at(key), path);
  }
}

RunConfig parse_run_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("configuration must be a JSON object");
  reject_unknown_keys(doc, json(RunConfig{}));
  RunConfig c;
  try {
    c = doc.get<RunConfig>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("configuration has a value of the wrong type: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) { return parse_run_config(read_json(path)); }

}  // namespace flowrl::svc
