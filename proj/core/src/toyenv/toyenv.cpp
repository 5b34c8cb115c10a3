#include "flowrl/toyenv/toyenv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "flowrl/common/error.hpp"
#include "flowrl/common/rng.hpp"
#include "flowrl/rewardkit/score.hpp"

namespace flowrl::toy {

namespace {

constexpr std::array<int, kNumGroups + 1> kGroupStart{0, 6, 11, 16};

std::vector<int> members(int g) {
  std::vector<int> m(static_cast<std::size_t>(kGroupStart[g + 1] - kGroupStart[g]));
  std::iota(m.begin(), m.end(), kGroupStart[g]);
  return m;
}

double squared_distance(const SceneState& a, int i, const SceneState& b, int j) {
  return (a.point(i) - b.point(j)).squaredNorm();
}

// Smallest summed squared distance between the points of group g in `a` and
// `b` over all within-group bijections.
double best_group_sse(const SceneState& a, const SceneState& b, int g) {
  auto idx = members(g);
  std::vector<int> perm = idx;
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t k = 0; k < idx.size(); ++k) s += squared_distance(a, idx[k], b, perm[k]);
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

double index_group_sse(const SceneState& a, const SceneState& b, int g) {
  double s = 0.0;
  for (int i : members(g)) s += squared_distance(a, i, b, i);
  return s;
}

int argmax3(const Vector& v, Eigen::Index off) {
  int best = 0;
  for (int i = 1; i < 3; ++i)
    if (v[off + i] > v[off + best]) best = i;
  return best;
}

}  // namespace

int group_of(int point) {
  if (point < 0 || point >= kNumPoints) throw ValidationError("toy: point index out of range");
  for (int g = 0; g < kNumGroups; ++g)
    if (point < kGroupStart[g + 1]) return g;
  return kNumGroups - 1;
}

Eigen::Vector2d SceneState::group_centroid(int g) const {
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  const auto m = members(g);
  for (int i : m) c += point(i);
  return c / static_cast<double>(m.size());
}

std::string to_string(EditKind k) {
  switch (k) {
    case EditKind::kTranslateGroup:
      return "translate_group";
    case EditKind::kScaleGroup:
      return "scale_group";
    case EditKind::kRemoveGroup:
      return "remove_group";
  }
  return "unknown";
}

EditKind edit_kind_from_string(const std::string& s) {
  if (s == "translate_group") return EditKind::kTranslateGroup;
  if (s == "scale_group") return EditKind::kScaleGroup;
  if (s == "remove_group") return EditKind::kRemoveGroup;
  throw ValidationError("toy: unknown edit kind '" + s + "'");
}

Vector EditInstruction::encode() const {
  Vector e = Vector::Zero(kInstructionDim);
  e[static_cast<int>(kind)] = 1.0;
  e[3 + group] = 1.0;
  switch (kind) {
    case EditKind::kTranslateGroup:
      e[6] = param.x();
      e[7] = param.y();
      break;
    case EditKind::kScaleGroup:
      e[6] = param.x() - 1.0;
      break;
    case EditKind::kRemoveGroup:
      break;
  }
  return e;
}

Vector ToyTask::condition() const {
  Vector c(kCondDim);
  c << source.points, instruction.encode();
  return c;
}

SceneState apply_edit(const SceneState& source, const EditInstruction& instr) {
  if (instr.group < 0 || instr.group >= kNumGroups) throw ValidationError("toy: group id out of range");
  SceneState out = source;
  const Eigen::Vector2d c = source.group_centroid(instr.group);
  for (int i : members(instr.group)) {
    Eigen::Vector2d p = source.point(i);
    switch (instr.kind) {
      case EditKind::kTranslateGroup:
        p += instr.param;
        break;
      case EditKind::kScaleGroup:
        p = c + instr.param.x() * (p - c);
        break;
      case EditKind::kRemoveGroup:
        p = c;
        break;
    }
    out.points.segment<2>(2 * i) = p;
  }
  return out;
}

ToyTask make_task(const SceneState& source, const EditInstruction& instr, std::uint64_t seed) {
  return {seed, source, instr, apply_edit(source, instr)};
}

ToyTask make_task(std::uint64_t seed) {
  auto eng = make_engine(seed, {0x7a5c});
  std::uniform_real_distribution<double> coord(-1.0, 1.0);
  SceneState src;
  for (Eigen::Index i = 0; i < src.points.size(); ++i) src.points[i] = coord(eng);
  EditInstruction instr;
  instr.kind = static_cast<EditKind>(std::uniform_int_distribution<int>(0, 2)(eng));
  instr.group = std::uniform_int_distribution<int>(0, kNumGroups - 1)(eng);
  // Offsets up to 0.5 and factors up to 1.25 keep every target inside the canvas.
  switch (instr.kind) {
    case EditKind::kTranslateGroup: {
      std::uniform_real_distribution<double> off(-0.5, 0.5);
      instr.param = {off(eng), off(eng)};
      break;
    }
    case EditKind::kScaleGroup:
      instr.param = {std::uniform_real_distribution<double>(0.5, 1.25)(eng), 0.0};
      break;
    case EditKind::kRemoveGroup:
      break;
  }
  return make_task(src, instr, seed);
}

OracleReward oracle_reward(const SceneState& source, const EditInstruction& instr, const SceneState& produced,
                           PointMatching matching) {
  OracleReward r;
  if (!produced.points.allFinite()) {
    r.flagged = true;
    return r;
  }
  const SceneState target = apply_edit(source, instr);
  auto sse = [&](int g) {
    return matching == PointMatching::kIndex ? index_group_sse(produced, target, g) : best_group_sse(produced, target, g);
  };
  const auto edited_coords = 2.0 * static_cast<double>(members(instr.group).size());
  double other_sse = 0.0, other_coords = 0.0;
  for (int g = 0; g < kNumGroups; ++g) {
    if (g == instr.group) continue;
    other_sse += sse(g);  // untouched groups: target equals source
    other_coords += 2.0 * static_cast<double>(members(g).size());
  }
  const double err = std::sqrt(sse(instr.group) / edited_coords) + std::sqrt(other_sse / other_coords);

  double excess = 0.0;
  for (Eigen::Index i = 0; i < produced.points.size(); ++i)
    excess += std::max(std::abs(produced.points[i]) - kCanvasHalfWidth, 0.0);
  excess /= static_cast<double>(produced.points.size());

  r.sc = kScoreMax * std::exp(-kAlpha * err);
  r.pq = kScoreMax * std::exp(-kGamma * excess);
  using reward::ScorePair;
  r.final = reward::final_score(ScorePair{{r.sc, r.sc}, reward::Dimension::kSC},
                                ScorePair{{r.pq, r.pq}, reward::Dimension::kPQ}, reward::SubAggregator::kMin, kScoreMax);
  return r;
}

ToyTask task_from_condition(const Vector& condition) {
  if (condition.size() != kCondDim) throw ValidationError("toy: condition has wrong dimension");
  SceneState src;
  src.points = condition.head(kStateDim);
  EditInstruction instr;
  instr.kind = static_cast<EditKind>(argmax3(condition, kStateDim));
  instr.group = argmax3(condition, kStateDim + 3);
  const double p0 = condition[kStateDim + 6], p1 = condition[kStateDim + 7];
  if (instr.kind == EditKind::kTranslateGroup) instr.param = {p0, p1};
  if (instr.kind == EditKind::kScaleGroup) instr.param = {p0 + 1.0, 0.0};
  return make_task(src, instr);
}

grpo::RewardFn make_reward_fn(PointMatching matching) {
  return [matching](const Vector& terminal, const Vector& condition) {
    const ToyTask task = task_from_condition(condition);
    SceneState produced;
    produced.points = terminal;
    const auto r = oracle_reward(task.source, task.instruction, produced, matching);
    grpo::RewardResult out;
    out.value = r.final;
    out.ok = !r.flagged;
    if (r.flagged) out.error = "non-finite produced state";
    return out;
  };
}

std::pair<Vector, Vector> sample_training_pair(std::mt19937_64& eng) {
  const ToyTask t = make_task(eng());
  return {t.target.points, t.condition()};
}

Architecture default_architecture() {
  Architecture a;
  a.state_dim = kStateDim;
  a.cond_dim = kCondDim;
  return a;
}

void to_json(nlohmann::json& j, const ToyTask& t) {
  std::vector<double> src(t.source.points.data(), t.source.points.data() + t.source.points.size());
  j = nlohmann::json{{"seed", t.seed},
                     {"source", src},
                     {"instruction",
                      {{"kind", to_string(t.instruction.kind)},
                       {"group", t.instruction.group},
                       {"param", {t.instruction.param.x(), t.instruction.param.y()}}}}};
}

void from_json(const nlohmann::json& j, ToyTask& t) {
  const auto src = j.at("source").get<std::vector<double>>();
  if (src.size() != static_cast<std::size_t>(kStateDim)) throw ValidationError("toy: source must have 32 coordinates");
  SceneState s;
  s.points = Eigen::Map<const Vector>(src.data(), kStateDim);
  const auto& ji = j.at("instruction");
  EditInstruction instr;
  instr.kind = edit_kind_from_string(ji.at("kind").get<std::string>());
  instr.group = ji.at("group").get<int>();
  const auto p = ji.value("param", std::vector<double>{0.0, 0.0});
  if (p.size() != 2) throw ValidationError("toy: param must have 2 entries");
  instr.param = {p[0], p[1]};
  t = make_task(s, instr, j.value("seed", std::uint64_t{0}));
}

std::vector<ToyTask> make_task_set(std::uint64_t seed, int count) {
  std::vector<ToyTask> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(make_task(derive_seed(seed, {static_cast<std::uint64_t>(i)})));
  return out;
}

}  // namespace flowrl::toy
