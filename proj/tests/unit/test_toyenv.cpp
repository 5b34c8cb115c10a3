#include <gtest/gtest.h>

#include <cmath>

#include "flowrl/common/rng.hpp"
#include "flowrl/toyenv/pipeline.hpp"
#include "flowrl/toyenv/toyenv.hpp"

using namespace flowrl;
using namespace flowrl::toy;

namespace {

EditInstruction translate(int g, double dx, double dy) {
  return {EditKind::kTranslateGroup, g, Eigen::Vector2d(dx, dy)};
}

// Direct evaluation of the reward formula with index matching; RMSE is per coordinate.
double expected_sc(const SceneState& src, const SceneState& tgt, int g, const SceneState& prod) {
  double se_edit = 0, se_rest = 0;
  int n_edit = 0, n_rest = 0;
  for (int i = 0; i < kNumPoints; ++i) {
    if (group_of(i) == g) {
      se_edit += (prod.point(i) - tgt.point(i)).squaredNorm();
      ++n_edit;
    } else {
      se_rest += (prod.point(i) - src.point(i)).squaredNorm();
      ++n_rest;
    }
  }
  return kScoreMax * std::exp(-kAlpha * (std::sqrt(se_edit / (2 * n_edit)) + std::sqrt(se_rest / (2 * n_rest))));
}

}  // namespace

TEST(ToyTask, DeterministicAndInCanvas) {
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto a = make_task(s);
    const auto b = make_task(s);
    EXPECT_EQ(a.source.points, b.source.points);
    EXPECT_EQ(a.target.points, b.target.points);
    EXPECT_EQ(a.instruction.kind, b.instruction.kind);
    EXPECT_EQ(a.instruction.param, b.instruction.param);
    EXPECT_LE(a.source.points.cwiseAbs().maxCoeff(), 1.0);
    EXPECT_LE(a.target.points.cwiseAbs().maxCoeff(), kCanvasHalfWidth);
  }
  EXPECT_NE(make_task(1).source.points, make_task(2).source.points);
}

TEST(ToyTask, GroupPartition) {
  int counts[kNumGroups] = {0, 0, 0};
  for (int i = 0; i < kNumPoints; ++i) ++counts[group_of(i)];
  EXPECT_EQ(counts[0], 6);
  EXPECT_EQ(counts[1], 5);
  EXPECT_EQ(counts[2], 5);
  EXPECT_THROW(group_of(16), ValidationError);
}

TEST(ApplyEdit, TransformsOnlyTheNamedGroup) {
  const auto src = make_task(3).source;
  const auto zero = make_task(src, translate(1, 0, 0));
  EXPECT_EQ(zero.target.points, src.points);

  const Eigen::Vector2d d(0.3, -0.2);
  const auto t = make_task(src, translate(2, d.x(), d.y()));
  EXPECT_NEAR((t.target.group_centroid(2) - (src.group_centroid(2) + d)).norm(), 0.0, 1e-15);
  for (int i = 0; i < kNumPoints; ++i)
    if (group_of(i) != 2) EXPECT_EQ(t.target.point(i), src.point(i));

  const auto sc = make_task(src, {EditKind::kScaleGroup, 0, Eigen::Vector2d(0.5, 0)});
  EXPECT_NEAR((sc.target.group_centroid(0) - src.group_centroid(0)).norm(), 0.0, 1e-14);
  for (int i = 0; i < kNumPoints; ++i)
    if (group_of(i) == 0)
      EXPECT_NEAR((sc.target.point(i) - sc.target.group_centroid(0)).norm(),
                  0.5 * (src.point(i) - src.group_centroid(0)).norm(), 1e-14);

  const auto rm = make_task(src, {EditKind::kRemoveGroup, 1, Eigen::Vector2d::Zero()});
  for (int i = 0; i < kNumPoints; ++i)
    if (group_of(i) == 1) EXPECT_NEAR((rm.target.point(i) - src.group_centroid(1)).norm(), 0.0, 1e-15);
}

TEST(OracleReward, PerfectEditScoresMax) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto t = make_task(s);
    const auto r = oracle_reward(t.source, t.instruction, t.target);
    EXPECT_DOUBLE_EQ(r.sc, 25.0);
    EXPECT_DOUBLE_EQ(r.pq, 25.0);
    EXPECT_DOUBLE_EQ(r.final, 25.0);
    EXPECT_FALSE(r.flagged);
  }
}

TEST(OracleReward, IgnoringTheInstructionCostsConsistency) {
  const auto t = make_task(make_task(4).source, translate(0, 0.4, 0.1));
  const auto r = oracle_reward(t.source, t.instruction, t.source);
  EXPECT_LT(r.sc, 25.0);
  EXPECT_NEAR(r.sc, expected_sc(t.source, t.target, 0, t.source), 1e-12);
  EXPECT_NEAR(r.final, std::sqrt(r.sc * r.pq), 1e-12);
}

TEST(OracleReward, StrictlyDecreasesWithUntouchedDisplacement) {
  const auto t = make_task(make_task(5).source, translate(0, 0.2, 0.2));
  double prev = 26.0;
  for (int k = 0; k <= 20; ++k) {
    SceneState p = t.target;
    for (int i = 0; i < kNumPoints; ++i)
      if (group_of(i) == 2) p.points[2 * i] += 0.02 * k;  // stays in canvas
    const auto r = oracle_reward(t.source, t.instruction, p);
    EXPECT_LT(r.final, prev);
    EXPECT_NEAR(r.sc, expected_sc(t.source, t.target, 0, p), 1e-12);
    prev = r.final;
  }
}

TEST(OracleReward, OutOfCanvasCostsQuality) {
  const auto t = make_task(6);
  SceneState p = t.target;
  p.points[0] = 2.5;  // 1.0 beyond the canvas edge
  const auto r = oracle_reward(t.source, t.instruction, p);
  EXPECT_LT(r.pq, 25.0);
  EXPECT_NEAR(r.pq, 25.0 * std::exp(-kGamma * 1.0 / kStateDim), 1e-12);
}

TEST(OracleReward, NonFiniteIsFlagged) {
  const auto t = make_task(7);
  SceneState p = t.target;
  p.points[3] = std::nan("");
  const auto r = oracle_reward(t.source, t.instruction, p);
  EXPECT_TRUE(r.flagged);
  EXPECT_EQ(r.final, 0.0);
  p.points[3] = std::numeric_limits<double>::infinity();
  EXPECT_TRUE(oracle_reward(t.source, t.instruction, p).flagged);
}

TEST(OracleReward, OptimalMatchingIsPermutationInvariant) {
  auto eng = make_engine(12);
  for (std::uint64_t s = 0; s < 30; ++s) {
    const auto t = make_task(s);
    SceneState noisy = t.target;
    for (int i = 0; i < kStateDim; ++i) noisy.points[i] += 0.05 * std::normal_distribution<double>()(eng);
    // Swap two points inside group 1 (indices 6..10).
    SceneState swapped = noisy;
    swapped.points.segment<2>(12) = noisy.points.segment<2>(18);
    swapped.points.segment<2>(18) = noisy.points.segment<2>(12);
    const auto a = oracle_reward(t.source, t.instruction, noisy, PointMatching::kOptimalWithinGroup);
    const auto b = oracle_reward(t.source, t.instruction, swapped, PointMatching::kOptimalWithinGroup);
    EXPECT_NEAR(a.final, b.final, 1e-12);
    // Index matching never scores better than the optimal matching.
    EXPECT_LE(oracle_reward(t.source, t.instruction, swapped).sc, b.sc + 1e-12);
  }
}

TEST(Condition, RoundTrip) {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto t = make_task(s);
    const auto c = t.condition();
    ASSERT_EQ(c.size(), kCondDim);
    const auto back = task_from_condition(c);
    EXPECT_EQ(back.instruction.kind, t.instruction.kind);
    EXPECT_EQ(back.instruction.group, t.instruction.group);
    EXPECT_NEAR((back.instruction.param - t.instruction.param).norm(), 0.0, 1e-15);
    EXPECT_NEAR((back.target.points - t.target.points).norm(), 0.0, 1e-14);
  }
  EXPECT_THROW(task_from_condition(Vector::Zero(3)), ValidationError);
}

TEST(Condition, RewardFnMatchesOracle) {
  const auto t = make_task(8);
  auto fn = make_reward_fn();
  EXPECT_DOUBLE_EQ(fn(t.target.points, t.condition()).value, 25.0);
  EXPECT_DOUBLE_EQ(fn(t.source.points, t.condition()).value, oracle_reward(t.source, t.instruction, t.source).final);
}

TEST(ToyTaskJson, RoundTrip) {
  const auto t = make_task(9);
  nlohmann::json j = t;
  const auto back = j.get<ToyTask>();
  EXPECT_EQ(back.source.points, t.source.points);
  EXPECT_NEAR((back.target.points - t.target.points).norm(), 0.0, 1e-14);
}

TEST(TrainingPairs, TargetIsTheTaskTarget) {
  auto eng = make_engine(13);
  for (int i = 0; i < 20; ++i) {
    const auto [x1, cond] = sample_training_pair(eng);
    const auto t = task_from_condition(cond);
    EXPECT_NEAR((x1 - t.target.points).norm(), 0.0, 1e-14);
  }
}

TEST(Pipeline, ShortRunIsDeterministicAndConfigRoundTrips) {
  RlRunConfig cfg;
  cfg.pretrain.steps = 5;
  cfg.iterations = 2;
  cfg.groups_per_update = 2;
  cfg.num_tasks = 4;
  cfg.eval_samples = 1;
  cfg.grpo.group_size = 4;
  cfg.grpo.sampler.steps = 5;
  const auto policy = pretrain_policy(cfg);
  int updates = 0;
  const auto a = run_rl(policy, cfg, [&](const grpo::UpdateStats&, const VelocityField&) { ++updates; });
  const auto b = run_rl(policy, cfg);
  EXPECT_EQ(updates, 2);
  EXPECT_EQ(a.history.size(), 2u);
  EXPECT_EQ(a.reward_before, b.reward_before);
  EXPECT_EQ(a.reward_after, b.reward_after);
  EXPECT_EQ(a.policy.parameters(), b.policy.parameters());

  nlohmann::json j = cfg;
  const auto back = j.get<RlRunConfig>();
  EXPECT_EQ(back.iterations, 2);
  EXPECT_EQ(back.pretrain.steps, 5);
  EXPECT_EQ(back.grpo.group_size, 4);
  cfg.groups_per_update = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Pipeline, BestOfNCurveIsNested) {
  RlRunConfig cfg;
  cfg.pretrain.steps = 5;
  const auto policy = pretrain_policy(cfg);
  const auto tasks = make_task_set(21, 6);
  SamplerConfig sampler;
  sampler.steps = 5;
  const std::vector<int> ns{1, 2, 4};
  const auto curve = best_of_n_curve(policy, tasks, sampler, ns, 3);
  ASSERT_EQ(curve.size(), 3u);
  // Nested candidate sets: the best of more candidates is never worse per task.
  EXPECT_LE(curve[0].mean_selected, curve[1].mean_selected + 1e-12);
  EXPECT_LE(curve[1].mean_selected, curve[2].mean_selected + 1e-12);
  const auto c1 = candidate_rewards(policy, tasks[0], sampler, 4, 3, 0);
  const auto c2 = candidate_rewards(policy, tasks[0], sampler, 2, 3, 0);
  EXPECT_EQ(c1[0], c2[0]);
  EXPECT_EQ(c1[1], c2[1]);
}
