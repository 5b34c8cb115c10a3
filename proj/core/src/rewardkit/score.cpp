#include "flowrl/rewardkit/score.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "flowrl/common/error.hpp"

namespace flowrl::reward {

std::string to_string(Dimension d) { return d == Dimension::kSC ? "SC" : "PQ"; }

void ScorePair::validate(double range_max) const {
  for (double s : sub) {
    if (!std::isfinite(s) || s < 0.0 || s > range_max)
      throw ValidationError(to_string(dimension) + " sub-score " + std::to_string(s) + " outside [0, " +
                            std::to_string(range_max) + "]");
  }
}

double aggregate(const ScorePair& p, SubAggregator agg) {
  return agg == SubAggregator::kMin ? std::min(p.sub[0], p.sub[1]) : 0.5 * (p.sub[0] + p.sub[1]);
}

double final_score(const ScorePair& sc, const ScorePair& pq, SubAggregator agg, double range_max) {
  sc.validate(range_max);
  pq.validate(range_max);
  return std::sqrt(aggregate(sc, agg) * aggregate(pq, agg));
}

double normalize_to_ten(double score, double range_max) {
  if (!(range_max > 0.0)) throw ValidationError("normalize_to_ten: range_max must be positive");
  return 10.0 * score / range_max;
}

void EnsembleConfig::validate() const {
  if (k < 1) throw ConfigError("ensemble: K must be >= 1");
}

void to_json(nlohmann::json& j, const EnsembleConfig& c) {
  j = nlohmann::json{{"k", c.k}, {"aggregator", c.aggregator == EnsembleAggregator::kMean ? "mean" : "median"}};
}

void from_json(const nlohmann::json& j, EnsembleConfig& c) {
  c.k = j.value("k", 4);
  const auto a = j.value("aggregator", std::string("mean"));
  if (a == "mean") {
    c.aggregator = EnsembleAggregator::kMean;
  } else if (a == "median") {
    c.aggregator = EnsembleAggregator::kMedian;
  } else {
    throw ConfigError("ensemble: aggregator must be 'mean' or 'median'");
  }
}

double self_ensemble(std::span<const double> scores, const EnsembleConfig& cfg) {
  cfg.validate();
  if (scores.empty()) throw ValidationError("self_ensemble: no scores");
  if (cfg.aggregator == EnsembleAggregator::kMean)
    return std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
  std::vector<double> s(scores.begin(), scores.end());
  std::sort(s.begin(), s.end());
  const auto n = s.size();
  return n % 2 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
}

}  // namespace flowrl::reward
