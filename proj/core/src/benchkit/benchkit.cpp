#include "flowrl/benchkit/benchkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace flowrl::bench {

using nlohmann::json;

std::string to_string(TierErrorKind k) {
  switch (k) {
    case TierErrorKind::kEmptyInput: return "empty_input";
    case TierErrorKind::kIllegalCharacter: return "illegal_character";
    case TierErrorKind::kEmptyTier: return "empty_tier";
    case TierErrorKind::kOutOfRange: return "out_of_range";
    case TierErrorKind::kDuplicate: return "duplicate_index";
    case TierErrorKind::kMissing: return "missing_index";
  }
  return "unknown";
}

int TierRanking::size() const {
  int n = 0;
  for (const auto& t : tiers) n += static_cast<int>(t.size());
  return n;
}

std::string TierRanking::str() const {
  std::string s;
  for (std::size_t i = 0; i < tiers.size(); ++i) {
    if (i) s += '|';
    for (int c : tiers[i]) s += static_cast<char>('0' + c);
  }
  return s;
}

TierRanking parse_tiers(const std::string& text, int n) {
  if (n < 1 || n > 9) throw ValidationError("parse_tiers: n must be in [1, 9]");
  if (text.empty()) throw TierError(TierErrorKind::kEmptyInput, "ranking is empty");
  TierRanking r;
  r.tiers.emplace_back();
  std::set<int> seen;
  for (std::size_t pos = 0; pos < text.size(); ++pos) {
    const char ch = text[pos];
    if (ch == '|') {
      if (r.tiers.back().empty())
        throw TierError(TierErrorKind::kEmptyTier, "empty tier before position " + std::to_string(pos + 1));
      r.tiers.emplace_back();
      continue;
    }
    if (ch < '0' || ch > '9') {
      throw TierError(TierErrorKind::kIllegalCharacter,
                      std::string("illegal character '") + ch + "' at position " + std::to_string(pos + 1) +
                          "; use digits and '|'");
    }
    const int idx = ch - '0';
    if (idx < 1 || idx > n)
      throw TierError(TierErrorKind::kOutOfRange,
                      "candidate " + std::to_string(idx) + " is out of range 1.." + std::to_string(n));
    if (!seen.insert(idx).second)
      throw TierError(TierErrorKind::kDuplicate, "candidate " + std::to_string(idx) + " appears more than once");
    r.tiers.back().insert(idx);
  }
  if (r.tiers.back().empty()) throw TierError(TierErrorKind::kEmptyTier, "ranking ends with an empty tier");
  for (int i = 1; i <= n; ++i) {
    if (!seen.count(i)) throw TierError(TierErrorKind::kMissing, "candidate " + std::to_string(i) + " is missing");
  }
  return r;
}

std::string to_string(BenchDimension d) {
  switch (d) {
    case BenchDimension::kPF: return "pf";
    case BenchDimension::kC: return "c";
    case BenchDimension::kO: return "o";
  }
  return "?";
}

BenchDimension bench_dimension_from_string(const std::string& s) {
  if (s == "pf") return BenchDimension::kPF;
  if (s == "c") return BenchDimension::kC;
  if (s == "o") return BenchDimension::kO;
  throw ValidationError("unknown benchmark dimension '" + s + "' (expected pf, c or o)");
}

void to_json(json& j, const PreferencePair& p) {
  j = json{{"entry", p.entry_id},       {"dimension", to_string(p.dimension)}, {"preferred", p.preferred},
           {"dispreferred", p.dispreferred}, {"category", p.category},         {"subtask", p.subtask}};
}

void from_json(const json& j, PreferencePair& p) {
  p.entry_id = j.at("entry").get<std::string>();
  p.dimension = bench_dimension_from_string(j.at("dimension").get<std::string>());
  p.preferred = j.at("preferred").get<int>();
  p.dispreferred = j.at("dispreferred").get<int>();
  p.category = j.value("category", std::string());
  p.subtask = j.value("subtask", std::string());
  if (p.preferred == p.dispreferred) throw ValidationError("pair for entry " + p.entry_id + " compares a candidate with itself");
}

std::vector<PreferencePair> tiers_to_pairs(const TierRanking& ranking, const PairTags& tags) {
  std::vector<PreferencePair> out;
  for (std::size_t i = 0; i < ranking.tiers.size(); ++i) {
    for (std::size_t j = i + 1; j < ranking.tiers.size(); ++j) {
      for (int a : ranking.tiers[i]) {
        for (int b : ranking.tiers[j]) {
          out.push_back({tags.entry_id, tags.dimension, a, b, tags.category, tags.subtask});
        }
      }
    }
  }
  return out;
}

const TierRanking& AnnotationRecord::ranking(BenchDimension d) const {
  switch (d) {
    case BenchDimension::kPF: return pf;
    case BenchDimension::kC: return c;
    case BenchDimension::kO: return o;
  }
  return o;
}

void AnnotationRecord::validate() const {
  if (entry_id.empty()) throw ValidationError("annotation record without entry id");
  if (rater.empty()) throw ValidationError("annotation record " + entry_id + " has no rater");
  const int n = static_cast<int>(candidates.size());
  for (auto d : kAllDimensions) {
    const auto& r = ranking(d);
    if (r.tiers.empty())
      throw ValidationError("annotation record " + entry_id + " is missing the " + to_string(d) + " ranking");
    // Round-trip through the parser so hand-built records get the same checks.
    parse_tiers(r.str(), n);
  }
}

void to_json(json& j, const AnnotationRecord& r) {
  j = json{{"entry", r.entry_id},
           {"category", r.category},
           {"subtask", r.subtask},
           {"instruction", r.instruction},
           {"input", r.input_ref},
           {"candidates", r.candidates},
           {"rankings", {{"pf", r.pf.str()}, {"c", r.c.str()}, {"o", r.o.str()}}},
           {"rater", r.rater}};
}

void from_json(const json& j, AnnotationRecord& r) {
  r.entry_id = j.at("entry").get<std::string>();
  r.category = j.value("category", std::string());
  r.subtask = j.value("subtask", std::string());
  r.instruction = j.value("instruction", std::string());
  r.input_ref = j.value("input", std::string());
  r.candidates = j.at("candidates").get<std::vector<std::string>>();
  r.rater = j.at("rater").get<std::string>();
  const auto& rk = j.at("rankings");
  const int n = static_cast<int>(r.candidates.size());
  r.pf = parse_tiers(rk.at("pf").get<std::string>(), n);
  r.c = parse_tiers(rk.at("c").get<std::string>(), n);
  r.o = parse_tiers(rk.at("o").get<std::string>(), n);
}

bool rankings_agree(const TierRanking& a, const TierRanking& b) { return a.tiers == b.tiers; }

std::vector<AcceptedEntry> agreement_filter(std::span<const AnnotationRecord> records) {
  std::map<std::string, std::vector<const AnnotationRecord*>> by_entry;
  for (const auto& r : records) by_entry[r.entry_id].push_back(&r);
  std::vector<AcceptedEntry> out;
  for (const auto& [id, recs] : by_entry) {
    if (recs.size() != 2)
      throw DataIntegrityError("entry " + id + " has " + std::to_string(recs.size()) + " raters; exactly 2 required");
    if (recs[0]->rater == recs[1]->rater) throw DataIntegrityError("entry " + id + " was annotated twice by one rater");
    for (auto d : kAllDimensions) {
      if (rankings_agree(recs[0]->ranking(d), recs[1]->ranking(d))) out.push_back({id, d, recs[0]});
    }
  }
  return out;
}

std::vector<PreferencePair> build_pairs(std::span<const AnnotationRecord> records) {
  std::vector<PreferencePair> out;
  for (const auto& acc : agreement_filter(records)) {
    auto p = tiers_to_pairs(acc.record->ranking(acc.dimension),
                            {acc.entry_id, acc.dimension, acc.record->category, acc.record->subtask});
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

double ScoreSource::lookup(const PreferencePair& p, int candidate) const {
  const auto dim_it = per_dimension.find(p.dimension);
  const ScoreTable& table = dim_it != per_dimension.end() ? dim_it->second : default_scores;
  const auto e = table.find(p.entry_id);
  if (e != table.end()) {
    const auto c = e->second.find(candidate);
    if (c != e->second.end()) return c->second;
  }
  throw DataIntegrityError("no score for entry " + p.entry_id + " candidate " + std::to_string(candidate) +
                           " (dimension " + to_string(p.dimension) + ")");
}

ScoreSource score_source_from_json(const std::vector<json>& rows) {
  ScoreSource s;
  for (const auto& row : rows) {
    const auto entry = row.at("entry").get<std::string>();
    const int cand = row.at("candidate").get<int>();
    const double score = row.at("score").get<double>();
    if (row.contains("dimension")) {
      s.per_dimension[bench_dimension_from_string(row.at("dimension").get<std::string>())][entry][cand] = score;
    } else {
      s.default_scores[entry][cand] = score;
    }
  }
  return s;
}

AccuracyReport pairwise_accuracy(std::span<const PreferencePair> pairs, const ScoreSource& scores, TiePolicy policy) {
  AccuracyReport rep;
  for (const auto& p : pairs) {
    const double a = scores.lookup(p, p.preferred);
    const double b = scores.lookup(p, p.dispreferred);
    double credit = 0.0;
    bool tie = false;
    if (a > b) {
      credit = 1.0;
    } else if (a == b) {
      tie = true;
      credit = policy == TiePolicy::kHalfCredit ? 0.5 : 0.0;
    }
    for (AccuracyCell* cell : {&rep.overall[p.dimension], &rep.by_category[{p.category, p.dimension}]}) {
      cell->correct += credit;
      cell->pairs += 1;
      cell->ties += tie ? 1 : 0;
    }
    rep.total_pairs += 1;
    rep.total_ties += tie ? 1 : 0;
  }
  return rep;
}

std::string AccuracyReport::table() const {
  std::ostringstream os;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-12s %10s %10s %10s\n", "category", "PF", "C", "O");
  os << buf;
  auto row = [&](const std::string& name, auto&& get) {
    std::snprintf(buf, sizeof buf, "%-12s", name.c_str());
    os << buf;
    for (auto d : kAllDimensions) {
      const AccuracyCell* cell = get(d);
      if (cell && cell->pairs > 0) {
        std::snprintf(buf, sizeof buf, " %10.4f", cell->accuracy());
      } else {
        std::snprintf(buf, sizeof buf, " %10s", "-");
      }
      os << buf;
    }
    os << '\n';
  };
  std::set<std::string> cats;
  for (const auto& [key, cell] : by_category) cats.insert(key.first);
  for (const auto& cat : cats) {
    row(cat.empty() ? "(none)" : cat, [&](BenchDimension d) -> const AccuracyCell* {
      auto it = by_category.find({cat, d});
      return it == by_category.end() ? nullptr : &it->second;
    });
  }
  row("overall", [&](BenchDimension d) -> const AccuracyCell* {
    auto it = overall.find(d);
    return it == overall.end() ? nullptr : &it->second;
  });
  os << "pairs: " << total_pairs << "  ties: " << total_ties << '\n';
  return os.str();
}

void to_json(json& j, const AccuracyReport& r) {
  auto cell_json = [](const AccuracyCell& c) {
    return json{{"accuracy", c.accuracy()}, {"pairs", c.pairs}, {"ties", c.ties}};
  };
  j = json::object();
  for (const auto& [d, c] : r.overall) j["overall"][to_string(d)] = cell_json(c);
  for (const auto& [key, c] : r.by_category) j["by_category"][key.first][to_string(key.second)] = cell_json(c);
  j["total_pairs"] = r.total_pairs;
  j["total_ties"] = r.total_ties;
}

Selection best_of_n(std::span<const double> scores) {
  if (scores.empty()) throw ValidationError("best_of_n: no candidates");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (std::isnan(scores[i])) throw ValidationError("best_of_n: candidate " + std::to_string(i) + " has a NaN score");
  }
  Selection s{0, scores[0]};
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > s.score) s = {i, scores[i]};
  }
  return s;
}

}  // namespace flowrl::bench
