#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowrl/common/error.hpp"

namespace flowrl::bench {

/// Why a ranking string was rejected. Kept stable: the annotation UI mirrors it.
enum class TierErrorKind { kEmptyInput, kIllegalCharacter, kEmptyTier, kOutOfRange, kDuplicate, kMissing };

std::string to_string(TierErrorKind k);

class TierError : public ValidationError {
 public:
  TierError(TierErrorKind kind, const std::string& what) : ValidationError(what), kind_(kind) {}
  TierErrorKind kind() const noexcept { return kind_; }

 private:
  TierErrorKind kind_;
};

/// Ordered partition of candidates 1..n, best tier first.
struct TierRanking {
  std::vector<std::set<int>> tiers;

  int size() const;  // n
  /// Canonical "3|12|45" form (indices ascending within a tier).
  std::string str() const;
  bool operator==(const TierRanking&) const = default;
};

/// Parses "3|12|45". Candidates are single digits 1..n (n <= 9).
TierRanking parse_tiers(const std::string& text, int n = 5);

enum class BenchDimension { kPF, kC, kO };

std::string to_string(BenchDimension d);
BenchDimension bench_dimension_from_string(const std::string& s);
inline constexpr BenchDimension kAllDimensions[] = {BenchDimension::kPF, BenchDimension::kC, BenchDimension::kO};

struct PairTags {
  std::string entry_id;
  BenchDimension dimension = BenchDimension::kO;
  std::string category;
  std::string subtask;
};

struct PreferencePair {
  std::string entry_id;
  BenchDimension dimension = BenchDimension::kO;
  int preferred = 0;
  int dispreferred = 0;
  std::string category;
  std::string subtask;

  auto operator<=>(const PreferencePair&) const = default;
};

void to_json(nlohmann::json& j, const PreferencePair& p);
void from_json(const nlohmann::json& j, PreferencePair& p);

/// Every cross-tier ordered pair, higher tier preferred. Within-tier pairs are dropped.
std::vector<PreferencePair> tiers_to_pairs(const TierRanking& ranking, const PairTags& tags = {});

inline constexpr const char* kCategories[] = {"Subject", "Appearance", "Scene", "Advanced"};

struct AnnotationRecord {
  std::string entry_id;
  std::string category;
  std::string subtask;
  std::string instruction;
  std::string input_ref;
  std::vector<std::string> candidates;  // n references, index i+1 = candidates[i]
  TierRanking pf, c, o;
  std::string rater;

  const TierRanking& ranking(BenchDimension d) const;
  void validate() const;
};

void to_json(nlohmann::json& j, const AnnotationRecord& r);
void from_json(const nlohmann::json& j, AnnotationRecord& r);

/// Raised when the data itself is inconsistent (wrong rater count, missing scores).
class DataIntegrityError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Both raters' partitions identical as ordered lists of sets.
bool rankings_agree(const TierRanking& a, const TierRanking& b);

struct AcceptedEntry {
  std::string entry_id;
  BenchDimension dimension;
  const AnnotationRecord* record;  // first rater's record; the rankings are equal
};

/// Groups records by entry id; every entry must have exactly two raters.
/// Returns the (entry, dimension) slices on which the raters agree, in entry id order.
std::vector<AcceptedEntry> agreement_filter(std::span<const AnnotationRecord> records);

/// Accepted slices decomposed into pairs.
std::vector<PreferencePair> build_pairs(std::span<const AnnotationRecord> records);

enum class TiePolicy { kHalfCredit, kStrict };

struct AccuracyCell {
  double correct = 0.0;  // with tie credit
  int pairs = 0;
  int ties = 0;
  double accuracy() const { return pairs == 0 ? 0.0 : correct / pairs; }
};

struct AccuracyReport {
  std::map<BenchDimension, AccuracyCell> overall;
  std::map<std::pair<std::string, BenchDimension>, AccuracyCell> by_category;
  int total_pairs = 0;
  int total_ties = 0;

  std::string table() const;
};

void to_json(nlohmann::json& j, const AccuracyReport& r);

/// entry id -> candidate index -> score.
using ScoreTable = std::map<std::string, std::map<int, double>>;

/// Optional per-dimension tables; if a dimension is absent the default table is used.
struct ScoreSource {
  ScoreTable default_scores;
  std::map<BenchDimension, ScoreTable> per_dimension;

  double lookup(const PreferencePair& p, int candidate) const;
};

/// Reads {"entry": id, "candidate": i, "score": s[, "dimension": "pf"|"c"|"o"]} lines.
ScoreSource score_source_from_json(const std::vector<nlohmann::json>& rows);

AccuracyReport pairwise_accuracy(std::span<const PreferencePair> pairs, const ScoreSource& scores,
                                 TiePolicy policy = TiePolicy::kHalfCredit);

struct Selection {
  std::size_t index = 0;  // 0-based
  double score = 0.0;
};

/// argmax with the lowest index winning ties.
Selection best_of_n(std::span<const double> scores);

template <class Candidate>
Selection best_of_n(std::span<const Candidate> candidates, const std::function<double(const Candidate&)>& score_fn) {
  std::vector<double> s;
  s.reserve(candidates.size());
  for (const auto& c : candidates) s.push_back(score_fn(c));
  return best_of_n(std::span<const double>(s));
}

}  // namespace flowrl::bench
