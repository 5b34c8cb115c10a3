#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace flowrl::data {

struct EmbeddedSample {
  std::string id;
  Eigen::VectorXd embedding;
  std::string tag;
};

void to_json(nlohmann::json& j, const EmbeddedSample& s);
void from_json(const nlohmann::json& j, EmbeddedSample& s);

enum class SeedRule {
  kFarthestFromCentroid,
  kFirst,  // smallest id
};

/// Checks that embeddings are finite and share one dimension.
void validate_corpus(std::span<const EmbeddedSample> samples);

/// Greedy max-min selection under Euclidean distance. Returns positions into
/// `samples` in selection order. Distance ties go to the smaller id.
std::vector<std::size_t> k_center_greedy(std::span<const EmbeddedSample> samples, std::size_t k,
                                         SeedRule seed = SeedRule::kFarthestFromCentroid);

/// Largest distance from any sample to its nearest center.
double covering_radius(std::span<const EmbeddedSample> samples, std::span<const std::size_t> centers);

struct GroupScores {
  std::string group_id;
  std::vector<double> scores;
};

void to_json(nlohmann::json& j, const GroupScores& g);
void from_json(const nlohmann::json& j, GroupScores& g);

/// Population standard deviation; 0 for a single score.
double population_std(std::span<const double> xs);

/// Keeps groups whose best candidate reaches theta_max.
std::vector<GroupScores> filter_by_group_max(std::span<const GroupScores> groups, double theta_max);

/// Keeps groups whose score spread reaches theta_std.
std::vector<GroupScores> filter_by_group_std(std::span<const GroupScores> groups, double theta_std);

struct FilterConfig {
  double range_max = 25.0;
  double theta_max = 0.6 * 25.0;
  double theta_std = 0.08 * 25.0;

  static FilterConfig for_range(double range_max);
  void validate() const;
};

void to_json(nlohmann::json& j, const FilterConfig& c);
void from_json(const nlohmann::json& j, FilterConfig& c);

}  // namespace flowrl::data
