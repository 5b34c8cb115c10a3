#pragma once

#include <array>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

namespace flowrl::reward {

enum class Dimension { kSC, kPQ };

std::string to_string(Dimension d);

/// How the two sub-scores of one dimension collapse to a scalar.
enum class SubAggregator { kMin, kMean };

/// Two sub-scores on [0, range_max]: SC = [editing success, overediting],
/// PQ = [naturalness, artifacts].
struct ScorePair {
  std::array<double, 2> sub{0.0, 0.0};
  Dimension dimension = Dimension::kSC;

  void validate(double range_max) const;
  bool operator==(const ScorePair&) const = default;
};

double aggregate(const ScorePair& p, SubAggregator agg);

/// sqrt(agg(sc) * agg(pq)); throws ValidationError on out-of-range sub-scores.
double final_score(const ScorePair& sc, const ScorePair& pq, SubAggregator agg = SubAggregator::kMin,
                   double range_max = 25.0);

/// Maps [0, range_max] onto [0, 10] for 10-point reporting.
double normalize_to_ten(double score, double range_max);

enum class EnsembleAggregator { kMean, kMedian };

struct EnsembleConfig {
  int k = 4;
  EnsembleAggregator aggregator = EnsembleAggregator::kMean;

  void validate() const;
};

void to_json(nlohmann::json& j, const EnsembleConfig& c);
void from_json(const nlohmann::json& j, EnsembleConfig& c);

/// Aggregates the scalar final scores of K passes.
double self_ensemble(std::span<const double> scores, const EnsembleConfig& cfg = {});

}  // namespace flowrl::reward
