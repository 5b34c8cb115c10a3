#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowrl/flowcore/adam.hpp"
#include "flowrl/flowcore/flow.hpp"

namespace flowrl::grpo {

enum class RewardFailurePolicy { kShrink, kResample };

struct GrpoConfig {
  int group_size = 12;
  double eps_low = 1e-4;
  double eps_high = 5e-4;
  double beta = 0.04;
  double lr = 4e-4;
  double std_floor = 1e-8;
  /// |log rho| beyond this is clamped before exponentiation.
  double max_log_ratio = 20.0;
  SamplerConfig sampler{.steps = 20, .sigma = 0.9};
  RewardFailurePolicy on_reward_failure = RewardFailurePolicy::kResample;
  int max_resamples = 2;

  void validate() const;
};

void to_json(nlohmann::json& j, const GrpoConfig& c);
void from_json(const nlohmann::json& j, GrpoConfig& c);

struct RewardResult {
  double value = 0.0;
  bool ok = true;
  std::string error;
};

/// Scores a terminal state for the condition it was generated under.
using RewardFn = std::function<RewardResult(const Vector& terminal, const Vector& condition)>;

struct TrajectoryGroup {
  Vector condition;
  std::vector<SdeTrajectory> trajectories;
  std::vector<double> rewards;
  int dropped = 0;    // trajectories removed after reward failures
  int resampled = 0;  // extra rollouts issued to replace failures

  void validate() const;
};

struct UpdateStats {
  long iteration = 0;
  double mean_reward = 0.0;
  double reward_std = 0.0;
  double advantage_mean = 0.0;
  double advantage_std = 0.0;
  double mean_ratio = 1.0;
  double max_ratio = 1.0;
  double clip_fraction = 0.0;
  double kl = 0.0;  // mean over trajectories of the summed per-step KL
  double objective = 0.0;
  double grad_norm = 0.0;
  long ratio_clamped = 0;
  long steps = 0;
};

void to_json(nlohmann::json& j, const UpdateStats& s);

/// (r_i - mean) / std with the population std; all zeros when std < std_floor.
std::vector<double> compute_advantages(std::span<const double> rewards, double std_floor);

/// exp(logp_new - logp_old) evaluated in log space. A log ratio beyond
/// max_log_ratio is clamped and reported through *clamped.
double importance_ratio(double logp_new, double logp_old, double max_log_ratio = 20.0, bool* clamped = nullptr);

/// min(rho A, clip(rho, 1 - eps_low, 1 + eps_high) A).
double clipped_term(double rho, double advantage, double eps_low, double eps_high);

/// True when the clipped branch strictly wins the min.
bool clip_active(double rho, double advantage, double eps_low, double eps_high);

/// KL between N(mu_new, sigma^2 dt I) and N(mu_ref, sigma^2 dt I).
double kl_penalty(const Vector& mu_new, const Vector& mu_ref, double sigma, double dt);

/// Surrogate mean_{i,t}[clipped_term] - beta mean_{i,t}[KL] and its gradient.
struct SurrogateResult {
  double objective = 0.0;
  Vector grad;  // d objective / d policy parameters
  UpdateStats stats;
};

SurrogateResult evaluate_surrogate(const VelocityField& policy, const VelocityField& reference,
                                   std::span<const TrajectoryGroup> groups, const GrpoConfig& cfg,
                                   bool with_gradient = true);

/// Samples G trajectories for one condition and attaches rewards. Noise for
/// trajectory j of group `group_index` is derived from (seed, group_index, j,
/// attempt) alone, so results do not depend on batching or scheduling.
TrajectoryGroup rollout_group(const VelocityField& policy, const RewardFn& reward, const Vector& condition,
                              const GrpoConfig& cfg, std::uint64_t seed, std::uint64_t group_index = 0);

/// Several groups sampled in one batch; equal to calling rollout_group on each
/// condition with group indices first_group_index, first_group_index + 1, ...
std::vector<TrajectoryGroup> rollout_groups(const VelocityField& policy, const RewardFn& reward,
                                            std::span<const Vector> conditions, const GrpoConfig& cfg,
                                            std::uint64_t seed, std::uint64_t first_group_index = 0);

/// One online GRPO ascent step on the policy. The reference stays frozen.
UpdateStats grpo_update(VelocityField& policy, const VelocityField& reference, std::span<const TrajectoryGroup> groups,
                        const GrpoConfig& cfg, Adam& optimizer);

/// Owns policy, frozen reference and optimizer state for a training run.
class GrpoTrainer {
 public:
  GrpoTrainer(VelocityField policy, GrpoConfig cfg, std::uint64_t seed);

  /// Rolls out one group per condition and applies a single update.
  UpdateStats step(std::span<const Vector> conditions, const RewardFn& reward);

  const VelocityField& policy() const noexcept { return policy_; }
  const VelocityField& reference() const noexcept { return reference_; }
  const GrpoConfig& config() const noexcept { return cfg_; }
  long iteration() const noexcept { return iteration_; }

 private:
  GrpoConfig cfg_;
  VelocityField policy_;
  VelocityField reference_;
  Adam optimizer_;
  std::uint64_t seed_;
  long iteration_ = 0;
  std::uint64_t groups_issued_ = 0;
};

}  // namespace flowrl::grpo
