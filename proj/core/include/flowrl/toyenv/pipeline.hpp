#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowrl/flowcore/cfm.hpp"
#include "flowrl/grpo/grpo.hpp"
#include "flowrl/toyenv/toyenv.hpp"

namespace flowrl {

void to_json(nlohmann::json& j, const CfmTrainConfig& c);
void from_json(const nlohmann::json& j, CfmTrainConfig& c);

}  // namespace flowrl

namespace flowrl::toy {

/// Mean oracle reward of SDE terminal states, `samples` rollouts per task.
/// Noise for (task i, sample j) is derived from (seed, i, j).
double mean_sde_reward(const VelocityField& policy, std::span<const ToyTask> tasks, const SamplerConfig& sampler,
                       std::uint64_t seed, int samples = 1);

/// Mean oracle reward of deterministic Euler ODE samples from seeded x0.
double mean_ode_reward(const VelocityField& policy, std::span<const ToyTask> tasks, int steps, std::uint64_t seed);

/// Oracle rewards of N SDE candidates for one task; candidate j uses noise (seed, task_index, j).
std::vector<double> candidate_rewards(const VelocityField& policy, const ToyTask& task, const SamplerConfig& sampler,
                                      int n, std::uint64_t seed, std::uint64_t task_index);

struct BestOfNPoint {
  int n = 0;
  double mean_selected = 0.0;
  double std_error = 0.0;
};

/// For each N, the mean over tasks of the oracle reward of the best-scored
/// candidate among the first N. Candidate sets are nested across N.
std::vector<BestOfNPoint> best_of_n_curve(const VelocityField& policy, std::span<const ToyTask> tasks,
                                          const SamplerConfig& sampler, std::span<const int> ns, std::uint64_t seed);

struct RlRunConfig {
  Architecture architecture = default_architecture();
  std::uint64_t init_seed = 1;
  CfmTrainConfig pretrain{.steps = 100, .batch_size = 64, .adam = {.lr = 1e-3}, .seed = 3};
  grpo::GrpoConfig grpo{};
  int iterations = 500;
  int groups_per_update = 8;
  int num_tasks = 64;
  std::uint64_t task_seed = 11;
  std::uint64_t rollout_seed = 5;
  std::uint64_t eval_seed = 99;
  int eval_samples = 4;
  int log_every = 25;
  int checkpoint_every = 100;

  void validate() const;
};

void to_json(nlohmann::json& j, const RlRunConfig& c);
void from_json(const nlohmann::json& j, RlRunConfig& c);

/// CFM pretraining on fresh toy tasks.
VelocityField pretrain_policy(const RlRunConfig& cfg, const std::function<void(int, double)>& on_step = {});

struct RlRunResult {
  double reward_before = 0.0;
  double reward_after = 0.0;
  std::vector<grpo::UpdateStats> history;
  VelocityField policy;
};

/// GRPO fine-tuning on a fixed task set. Tasks are cycled in order,
/// groups_per_update per update. Reward before and after is mean_sde_reward
/// on the same task set with the same evaluation noise.
RlRunResult run_rl(VelocityField initial, const RlRunConfig& cfg,
                   const std::function<void(const grpo::UpdateStats&, const VelocityField&)>& on_update = {});

}  // namespace flowrl::toy
