#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flowrl/benchkit/benchkit.hpp"
#include "flowrl/common/rng.hpp"

using namespace flowrl;
using namespace flowrl::bench;

namespace {

TierErrorKind kind_of(const std::string& text, int n = 5) {
  try {
    parse_tiers(text, n);
  } catch (const TierError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error for " << text;
  return TierErrorKind::kEmptyInput;
}

AnnotationRecord record(const std::string& id, const std::string& rater, const std::string& pf, const std::string& c,
                        const std::string& o, const std::string& category = "Subject") {
  AnnotationRecord r;
  r.entry_id = id;
  r.category = category;
  r.subtask = "add";
  r.instruction = "add a hat";
  r.input_ref = "in.png";
  r.candidates = {"a", "b", "c", "d", "e"};
  r.pf = parse_tiers(pf);
  r.c = parse_tiers(c);
  r.o = parse_tiers(o);
  r.rater = rater;
  return r;
}

// Random ordered partition of 1..n.
TierRanking random_partition(std::mt19937_64& eng, int n) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 1);
  std::shuffle(perm.begin(), perm.end(), eng);
  TierRanking r;
  r.tiers.emplace_back();
  for (int v : perm) {
    if (!r.tiers.back().empty() && std::bernoulli_distribution(0.5)(eng)) r.tiers.emplace_back();
    r.tiers.back().insert(v);
  }
  return r;
}

}  // namespace

TEST(ParseTiers, Examples) {
  const auto r = parse_tiers("3|12|45");
  ASSERT_EQ(r.tiers.size(), 3u);
  EXPECT_EQ(r.tiers[0], (std::set<int>{3}));
  EXPECT_EQ(r.tiers[1], (std::set<int>{1, 2}));
  EXPECT_EQ(r.tiers[2], (std::set<int>{4, 5}));
  EXPECT_EQ(r.size(), 5);
  EXPECT_EQ(r.str(), "3|12|45");
  EXPECT_EQ(parse_tiers("3|21|45"), r);

  const auto s = parse_tiers("1|4|5|2|3");
  ASSERT_EQ(s.tiers.size(), 5u);
  for (const auto& t : s.tiers) EXPECT_EQ(t.size(), 1u);
  EXPECT_EQ(*s.tiers[1].begin(), 4);

  EXPECT_EQ(parse_tiers("1|23|45").tiers.size(), 3u);
  EXPECT_EQ(parse_tiers("21|3", 3).str(), "12|3");
}

TEST(ParseTiers, ErrorKinds) {
  EXPECT_EQ(kind_of("12|12", 4), TierErrorKind::kDuplicate);
  EXPECT_EQ(kind_of("1|2|3|4"), TierErrorKind::kMissing);
  EXPECT_EQ(kind_of("1||2345"), TierErrorKind::kEmptyTier);
  EXPECT_EQ(kind_of("|12345"), TierErrorKind::kEmptyTier);
  EXPECT_EQ(kind_of("12346"), TierErrorKind::kOutOfRange);
  EXPECT_EQ(kind_of("0|1234"), TierErrorKind::kOutOfRange);
  EXPECT_EQ(kind_of("1a|2345"), TierErrorKind::kIllegalCharacter);
  EXPECT_EQ(kind_of(""), TierErrorKind::kEmptyInput);
  EXPECT_EQ(kind_of("12 | 345"), TierErrorKind::kIllegalCharacter);
  EXPECT_EQ(to_string(TierErrorKind::kDuplicate), "duplicate_index");
  EXPECT_EQ(to_string(TierErrorKind::kMissing), "missing_index");
  EXPECT_THROW(parse_tiers("1", 0), ValidationError);
  EXPECT_THROW(parse_tiers("1", 10), ValidationError);
}

TEST(ParseTiers, RoundTripOnRandomPartitions) {
  auto eng = make_engine(4);
  for (int i = 0; i < 500; ++i) {
    const int n = 1 + i % 9;
    const auto r = random_partition(eng, n);
    EXPECT_EQ(parse_tiers(r.str(), n), r);
  }
}

TEST(TiersToPairs, ForcedPairs) {
  const PairTags tags{"e1", BenchDimension::kC, "Scene", "background"};
  const auto pairs = tiers_to_pairs(parse_tiers("3|12|45"), tags);
  ASSERT_EQ(pairs.size(), 8u);
  std::set<std::pair<int, int>> got;
  for (const auto& p : pairs) {
    got.insert({p.preferred, p.dispreferred});
    EXPECT_EQ(p.entry_id, "e1");
    EXPECT_EQ(p.dimension, BenchDimension::kC);
    EXPECT_EQ(p.category, "Scene");
  }
  const std::set<std::pair<int, int>> expected{{3, 1}, {3, 2}, {3, 4}, {3, 5}, {1, 4}, {1, 5}, {2, 4}, {2, 5}};
  EXPECT_EQ(got, expected);
  EXPECT_TRUE(tiers_to_pairs(parse_tiers("12345")).empty());
}

TEST(TiersToPairs, CountAndAntisymmetryOverRandomPartitions) {
  auto eng = make_engine(5);
  for (int i = 0; i < 1000; ++i) {
    const auto r = random_partition(eng, 1 + i % 9);
    std::size_t expected = 0;
    for (std::size_t a = 0; a < r.tiers.size(); ++a)
      for (std::size_t b = a + 1; b < r.tiers.size(); ++b) expected += r.tiers[a].size() * r.tiers[b].size();
    const auto pairs = tiers_to_pairs(r);
    ASSERT_EQ(pairs.size(), expected);
    std::set<std::pair<int, int>> seen;
    for (const auto& p : pairs) seen.insert({p.preferred, p.dispreferred});
    for (const auto& [x, y] : seen) EXPECT_FALSE(seen.count({y, x})) << r.str();
    EXPECT_EQ(seen.size(), pairs.size());
  }
}

TEST(PreferencePair, JsonRoundTrip) {
  const PreferencePair p{"e9", BenchDimension::kPF, 3, 1, "Advanced", "text"};
  const nlohmann::json j = p;
  EXPECT_EQ(j["dimension"], "pf");
  EXPECT_EQ(j.get<PreferencePair>(), p);
}

TEST(Agreement, Examples) {
  EXPECT_TRUE(rankings_agree(parse_tiers("3|12|45"), parse_tiers("3|12|45")));
  EXPECT_TRUE(rankings_agree(parse_tiers("3|12|45"), parse_tiers("3|21|45")));
  EXPECT_FALSE(rankings_agree(parse_tiers("3|12|45"), parse_tiers("13|2|45")));
  EXPECT_FALSE(rankings_agree(parse_tiers("3|12|45"), parse_tiers("12|3|45")));
}

TEST(Agreement, FilterPerDimension) {
  const std::vector<AnnotationRecord> recs{
      record("e1", "alice", "3|12|45", "12345", "1|2|3|4|5"),
      record("e1", "bob", "3|21|45", "1|2345", "1|2|3|4|5"),
      record("e2", "alice", "5|4|3|2|1", "12|345", "12345"),
      record("e2", "bob", "5|4|3|2|1", "12|345", "54321"),
  };
  const auto accepted = agreement_filter(recs);
  std::set<std::pair<std::string, BenchDimension>> got;
  for (const auto& a : accepted) got.insert({a.entry_id, a.dimension});
  const std::set<std::pair<std::string, BenchDimension>> expected{{"e1", BenchDimension::kPF},
                                                                  {"e1", BenchDimension::kO},
                                                                  {"e2", BenchDimension::kPF},
                                                                  {"e2", BenchDimension::kC},
                                                                  {"e2", BenchDimension::kO}};
  EXPECT_EQ(got, expected);

  // 8 + 10 + 10 + 6 + 0; "54321" is one tier, so it agrees with "12345"
  EXPECT_EQ(build_pairs(recs).size(), 34u);
}

TEST(Agreement, RequiresExactlyTwoRaters) {
  std::vector<AnnotationRecord> one{record("e1", "alice", "12345", "12345", "12345")};
  EXPECT_THROW(agreement_filter(one), DataIntegrityError);
  std::vector<AnnotationRecord> three{record("e1", "a", "12345", "12345", "12345"),
                                      record("e1", "b", "12345", "12345", "12345"),
                                      record("e1", "c", "12345", "12345", "12345")};
  EXPECT_THROW(agreement_filter(three), DataIntegrityError);
  std::vector<AnnotationRecord> same_rater{record("e1", "a", "12345", "12345", "12345"),
                                           record("e1", "a", "12345", "12345", "12345")};
  EXPECT_THROW(agreement_filter(same_rater), DataIntegrityError);
}

TEST(AnnotationRecordJson, RoundTrip) {
  const auto r = record("e7", "carol", "3|12|45", "1|4|5|2|3", "12345", "Appearance");
  const nlohmann::json j = r;
  EXPECT_EQ(j["rankings"]["pf"], "3|12|45");
  const auto back = j.get<AnnotationRecord>();
  EXPECT_EQ(back.pf, r.pf);
  EXPECT_EQ(back.c, r.c);
  EXPECT_EQ(back.rater, "carol");
  EXPECT_EQ(back.candidates, r.candidates);
}

namespace {

std::vector<PreferencePair> simple_pairs() {
  return {{"e", BenchDimension::kO, 1, 2, "Subject", ""},
          {"e", BenchDimension::kO, 1, 3, "Subject", ""},
          {"e", BenchDimension::kO, 2, 3, "Scene", ""}};
}

}  // namespace

TEST(Accuracy, TwoOfThree) {
  ScoreSource s;
  s.default_scores["e"] = {{1, 5.0}, {2, 4.0}, {3, 4.5}};  // wins 1>2, 1>3; loses 2 vs 3
  const auto pairs = simple_pairs();
  const auto rep = pairwise_accuracy(pairs, s);
  EXPECT_NEAR(rep.overall.at(BenchDimension::kO).accuracy(), 2.0 / 3.0, 1e-12);
  EXPECT_EQ(rep.total_pairs, 3);
  EXPECT_NEAR((rep.by_category.at({"Subject", BenchDimension::kO}).accuracy()), 1.0, 1e-12);
  EXPECT_NEAR((rep.by_category.at({"Scene", BenchDimension::kO}).accuracy()), 0.0, 1e-12);
  EXPECT_FALSE(rep.table().empty());
}

TEST(Accuracy, ConstantScorerAndTiePolicy) {
  ScoreSource s;
  s.default_scores["e"] = {{1, 7.0}, {2, 7.0}, {3, 7.0}};
  const auto pairs = simple_pairs();
  const auto half = pairwise_accuracy(pairs, s);
  EXPECT_DOUBLE_EQ(half.overall.at(BenchDimension::kO).accuracy(), 0.5);
  EXPECT_EQ(half.total_ties, 3);
  EXPECT_DOUBLE_EQ(pairwise_accuracy(pairs, s, TiePolicy::kStrict).overall.at(BenchDimension::kO).accuracy(), 0.0);
}

TEST(Accuracy, OracleRandomAndRankInvariance) {
  auto eng = make_engine(6);
  std::vector<PreferencePair> pairs;
  ScoreSource oracle, noise, warped;
  for (int e = 0; e < 4000; ++e) {
    const std::string id = "e" + std::to_string(e);
    const auto r = random_partition(eng, 5);
    for (std::size_t t = 0; t < r.tiers.size(); ++t)
      for (int c : r.tiers[t]) {
        const double q = -static_cast<double>(t);
        oracle.default_scores[id][c] = q;
        warped.default_scores[id][c] = std::exp(3 * q) + 2;  // strictly increasing transform
        noise.default_scores[id][c] = std::normal_distribution<double>()(eng);
      }
    for (auto p : tiers_to_pairs(r, {id, BenchDimension::kO, "Subject", ""})) pairs.push_back(p);
  }
  ASSERT_GE(pairs.size(), 10000u);
  EXPECT_DOUBLE_EQ(pairwise_accuracy(pairs, oracle).overall.at(BenchDimension::kO).accuracy(), 1.0);
  EXPECT_DOUBLE_EQ(pairwise_accuracy(pairs, warped).overall.at(BenchDimension::kO).accuracy(), 1.0);
  const double acc = pairwise_accuracy(pairs, noise).overall.at(BenchDimension::kO).accuracy();
  // Pairs within an entry share scores; the SE bound below uses entries, not pairs.
  EXPECT_NEAR(acc, 0.5, 3 * std::sqrt(0.25 / 4000.0));
}

TEST(Accuracy, MissingScoreNamesEntryAndCandidate) {
  ScoreSource s;
  s.default_scores["e"] = {{1, 1.0}, {2, 0.0}};
  const auto pairs = simple_pairs();
  try {
    pairwise_accuracy(pairs, s);
    FAIL();
  } catch (const DataIntegrityError& e) {
    EXPECT_NE(std::string(e.what()).find("e"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("3"), std::string::npos);
  }
}

TEST(Accuracy, PerDimensionScoresFromJson) {
  const std::vector<nlohmann::json> rows{
      {{"entry", "e"}, {"candidate", 1}, {"score", 1.0}},
      {{"entry", "e"}, {"candidate", 2}, {"score", 2.0}},
      {{"entry", "e"}, {"candidate", 1}, {"score", 9.0}, {"dimension", "pf"}},
      {{"entry", "e"}, {"candidate", 2}, {"score", 0.0}, {"dimension", "pf"}},
  };
  const auto src = score_source_from_json(rows);
  const std::vector<PreferencePair> pairs{{"e", BenchDimension::kPF, 1, 2, "Subject", ""},
                                          {"e", BenchDimension::kO, 1, 2, "Subject", ""}};
  const auto rep = pairwise_accuracy(pairs, src);
  EXPECT_DOUBLE_EQ(rep.overall.at(BenchDimension::kPF).accuracy(), 1.0);
  EXPECT_DOUBLE_EQ(rep.overall.at(BenchDimension::kO).accuracy(), 0.0);
}

TEST(BestOfN, Examples) {
  const std::vector<double> s{3.1, 7.2, 5.0};
  const auto sel = best_of_n(s);
  EXPECT_EQ(sel.index, 1u);  // second candidate
  EXPECT_DOUBLE_EQ(sel.score, 7.2);
  EXPECT_EQ(best_of_n(std::vector<double>{4.0}).index, 0u);
  EXPECT_EQ(best_of_n(std::vector<double>{1, 5, 5}).index, 1u);
  EXPECT_THROW(best_of_n(std::vector<double>{}), ValidationError);
  EXPECT_THROW(best_of_n(std::vector<double>{1, std::nan("")}), ValidationError);

  const std::vector<std::string> cands{"a", "bbb", "cc"};
  const auto by_len = best_of_n<std::string>(cands, [](const std::string& c) { return double(c.size()); });
  EXPECT_EQ(by_len.index, 1u);
}
