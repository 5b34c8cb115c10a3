#include "flowrl/datapipe/datapipe.hpp"

#include <cmath>
#include <limits>

#include "flowrl/common/error.hpp"

namespace flowrl::data {

using nlohmann::json;

void to_json(json& j, const EmbeddedSample& s) {
  j = json{{"id", s.id}, {"embedding", std::vector<double>(s.embedding.data(), s.embedding.data() + s.embedding.size())},
           {"tag", s.tag}};
}

void from_json(const json& j, EmbeddedSample& s) {
  s.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
  const auto v = j.at("embedding").get<std::vector<double>>();
  s.embedding = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  s.tag = j.value("tag", std::string());
}

void validate_corpus(std::span<const EmbeddedSample> samples) {
  if (samples.empty()) return;
  const auto m = samples[0].embedding.size();
  if (m == 0) throw ValidationError("sample " + samples[0].id + " has an empty embedding");
  for (const auto& s : samples) {
    if (s.embedding.size() != m)
      throw ValidationError("sample " + s.id + " has embedding dimension " + std::to_string(s.embedding.size()) +
                            ", expected " + std::to_string(m));
    if (!s.embedding.allFinite()) throw ValidationError("sample " + s.id + " has a non-finite embedding");
  }
}

std::vector<std::size_t> k_center_greedy(std::span<const EmbeddedSample> samples, std::size_t k, SeedRule seed) {
  const std::size_t n = samples.size();
  if (k > n)
    throw ValidationError("k_center_greedy: k = " + std::to_string(k) + " exceeds the " + std::to_string(n) +
                          " available samples");
  validate_corpus(samples);
  std::vector<std::size_t> selected;
  if (k == 0) return selected;

  std::size_t first = 0;
  if (seed == SeedRule::kFarthestFromCentroid) {
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(samples[0].embedding.size());
    for (const auto& s : samples) centroid += s.embedding;
    centroid /= static_cast<double>(n);
    double best = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = (samples[i].embedding - centroid).squaredNorm();
      if (d > best || (d == best && samples[i].id < samples[first].id)) {
        best = d;
        first = i;
      }
    }
  } else {
    for (std::size_t i = 1; i < n; ++i)
      if (samples[i].id < samples[first].id) first = i;
  }
  selected.push_back(first);

  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::vector<char> taken(n, 0);
  taken[first] = 1;
  std::size_t last = first;
  while (selected.size() < k) {
    std::size_t pick = n;
    double best = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      nearest[i] = std::min(nearest[i], (samples[i].embedding - samples[last].embedding).norm());
      if (nearest[i] > best || (nearest[i] == best && samples[i].id < samples[pick].id)) {
        best = nearest[i];
        pick = i;
      }
    }
    taken[pick] = 1;
    selected.push_back(pick);
    last = pick;
  }
  return selected;
}

double covering_radius(std::span<const EmbeddedSample> samples, std::span<const std::size_t> centers) {
  if (centers.empty()) throw ValidationError("covering_radius: no centers");
  double radius = 0.0;
  for (const auto& s : samples) {
    double d = std::numeric_limits<double>::infinity();
    for (auto c : centers) d = std::min(d, (s.embedding - samples[c].embedding).norm());
    radius = std::max(radius, d);
  }
  return radius;
}

void to_json(json& j, const GroupScores& g) { j = json{{"group", g.group_id}, {"scores", g.scores}}; }

void from_json(const json& j, GroupScores& g) {
  g.group_id = j.at("group").is_string() ? j.at("group").get<std::string>() : j.at("group").dump();
  g.scores = j.at("scores").get<std::vector<double>>();
  if (g.scores.empty()) throw ValidationError("group " + g.group_id + " has no scores");
}

double population_std(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size()));
}

namespace {

void check_group(const GroupScores& g) {
  if (g.scores.empty()) throw ValidationError("group " + g.group_id + " has no scores");
}

}  // namespace

std::vector<GroupScores> filter_by_group_max(std::span<const GroupScores> groups, double theta_max) {
  std::vector<GroupScores> out;
  for (const auto& g : groups) {
    check_group(g);
    double mx = -std::numeric_limits<double>::infinity();
    for (double s : g.scores) mx = std::max(mx, s);
    if (mx >= theta_max) out.push_back(g);
  }
  return out;
}

std::vector<GroupScores> filter_by_group_std(std::span<const GroupScores> groups, double theta_std) {
  if (theta_std < 0.0) throw ValidationError("filter_by_group_std: theta_std must be >= 0");
  std::vector<GroupScores> out;
  for (const auto& g : groups) {
    check_group(g);
    if (population_std(g.scores) >= theta_std) out.push_back(g);
  }
  return out;
}

FilterConfig FilterConfig::for_range(double range_max) { return {range_max, 0.6 * range_max, 0.08 * range_max}; }

void FilterConfig::validate() const {
  if (!(range_max > 0.0)) throw ConfigError("filter: range_max must be positive");
  if (theta_max < 0.0 || theta_max > range_max) throw ConfigError("filter: theta_max must lie in [0, range_max]");
  if (theta_std < 0.0) throw ConfigError("filter: theta_std must be >= 0");
}

void to_json(json& j, const FilterConfig& c) {
  j = json{{"range_max", c.range_max}, {"theta_max", c.theta_max}, {"theta_std", c.theta_std}};
}

void from_json(const json& j, FilterConfig& c) {
  const double r = j.value("range_max", 25.0);
  c = FilterConfig::for_range(r);
  c.theta_max = j.value("theta_max", c.theta_max);
  c.theta_std = j.value("theta_std", c.theta_std);
  c.validate();
}

}  // namespace flowrl::data
