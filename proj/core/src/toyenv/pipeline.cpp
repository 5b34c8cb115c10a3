#include "flowrl/toyenv/pipeline.hpp"

#include <cmath>

#include "flowrl/benchkit/benchkit.hpp"
#include "flowrl/common/error.hpp"
#include "flowrl/common/rng.hpp"

namespace flowrl::toy {

using nlohmann::json;

namespace {

double task_reward(const ToyTask& task, const Vector& terminal) {
  SceneState produced;
  produced.points = terminal;
  return oracle_reward(task.source, task.instruction, produced).final;
}

// One SDE batch over (task, sample) pairs; engines keyed by (seed, task, sample).
std::vector<SdeTrajectory> sample_tasks(const VelocityField& policy, std::span<const ToyTask> tasks,
                                        const SamplerConfig& sampler, int samples, std::uint64_t seed,
                                        std::uint64_t first_task_index) {
  const auto n = static_cast<Eigen::Index>(tasks.size()) * samples;
  Matrix x0(kStateDim, n), cond(kCondDim, n);
  std::vector<Engine> engines;
  engines.reserve(static_cast<std::size_t>(n));
  Eigen::Index col = 0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const Vector c = tasks[i].condition();
    for (int j = 0; j < samples; ++j, ++col) {
      engines.push_back(make_engine(seed, {first_task_index + i, static_cast<std::uint64_t>(j)}));
      x0.col(col) = standard_normal(kStateDim, engines.back());
      cond.col(col) = c;
    }
  }
  return sde_sample_batch(policy, x0, cond, sampler, engines);
}

}  // namespace

double mean_sde_reward(const VelocityField& policy, std::span<const ToyTask> tasks, const SamplerConfig& sampler,
                       std::uint64_t seed, int samples) {
  if (tasks.empty() || samples < 1) throw ValidationError("mean_sde_reward: need tasks and samples >= 1");
  const auto trajs = sample_tasks(policy, tasks, sampler, samples, seed, 0);
  double sum = 0.0;
  for (std::size_t k = 0; k < trajs.size(); ++k)
    sum += task_reward(tasks[k / static_cast<std::size_t>(samples)], trajs[k].terminal());
  return sum / static_cast<double>(trajs.size());
}

double mean_ode_reward(const VelocityField& policy, std::span<const ToyTask> tasks, int steps, std::uint64_t seed) {
  if (tasks.empty()) throw ValidationError("mean_ode_reward: no tasks");
  const auto n = static_cast<Eigen::Index>(tasks.size());
  Matrix x0(kStateDim, n), cond(kCondDim, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    auto eng = make_engine(seed, {static_cast<std::uint64_t>(i)});
    x0.col(i) = standard_normal(kStateDim, eng);
    cond.col(i) = tasks[static_cast<std::size_t>(i)].condition();
  }
  const Matrix out = ode_sample_batch(policy, x0, cond, steps);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) sum += task_reward(tasks[static_cast<std::size_t>(i)], out.col(i));
  return sum / static_cast<double>(n);
}

std::vector<double> candidate_rewards(const VelocityField& policy, const ToyTask& task, const SamplerConfig& sampler,
                                      int n, std::uint64_t seed, std::uint64_t task_index) {
  if (n < 1) throw ValidationError("candidate_rewards: n must be >= 1");
  const auto trajs = sample_tasks(policy, std::span<const ToyTask>(&task, 1), sampler, n, seed, task_index);
  std::vector<double> out;
  for (const auto& t : trajs) out.push_back(task_reward(task, t.terminal()));
  return out;
}

std::vector<BestOfNPoint> best_of_n_curve(const VelocityField& policy, std::span<const ToyTask> tasks,
                                          const SamplerConfig& sampler, std::span<const int> ns, std::uint64_t seed) {
  if (tasks.empty() || ns.empty()) throw ValidationError("best_of_n_curve: need tasks and at least one N");
  int n_max = 0;
  for (int n : ns) {
    if (n < 1) throw ValidationError("best_of_n_curve: N must be >= 1");
    n_max = std::max(n_max, n);
  }
  const auto trajs = sample_tasks(policy, tasks, sampler, n_max, seed, 0);
  std::vector<BestOfNPoint> curve;
  for (int n : ns) {
    std::vector<double> picked;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      std::vector<double> scores;
      for (int j = 0; j < n; ++j)
        scores.push_back(task_reward(tasks[i], trajs[i * static_cast<std::size_t>(n_max) + j].terminal()));
      picked.push_back(bench::best_of_n(std::span<const double>(scores)).score);
    }
    double mean = 0.0;
    for (double p : picked) mean += p;
    mean /= static_cast<double>(picked.size());
    double ss = 0.0;
    for (double p : picked) ss += (p - mean) * (p - mean);
    const double sd = picked.size() > 1 ? std::sqrt(ss / static_cast<double>(picked.size() - 1)) : 0.0;
    curve.push_back({n, mean, sd / std::sqrt(static_cast<double>(picked.size()))});
  }
  return curve;
}

void RlRunConfig::validate() const {
  architecture.validate();
  if (architecture.state_dim != static_cast<std::size_t>(kStateDim) ||
      architecture.cond_dim != static_cast<std::size_t>(kCondDim))
    throw ConfigError("rl: architecture must have state_dim 32 and cond_dim 40 for the toy environment");
  grpo.validate();
  if (pretrain.steps < 0 || pretrain.batch_size < 1) throw ConfigError("rl: invalid pretrain steps or batch size");
  if (iterations < 0) throw ConfigError("rl: iterations must be >= 0");
  if (groups_per_update < 1) throw ConfigError("rl: groups_per_update must be >= 1");
  if (num_tasks < 1) throw ConfigError("rl: num_tasks must be >= 1");
  if (eval_samples < 1) throw ConfigError("rl: eval_samples must be >= 1");
  if (log_every < 1 || checkpoint_every < 0) throw ConfigError("rl: log_every must be >= 1, checkpoint_every >= 0");
}

void to_json(json& j, const RlRunConfig& c) {
  j = json{{"architecture", c.architecture},
           {"init_seed", c.init_seed},
           {"pretrain", c.pretrain},
           {"grpo", c.grpo},
           {"iterations", c.iterations},
           {"groups_per_update", c.groups_per_update},
           {"num_tasks", c.num_tasks},
           {"task_seed", c.task_seed},
           {"rollout_seed", c.rollout_seed},
           {"eval_seed", c.eval_seed},
           {"eval_samples", c.eval_samples},
           {"log_every", c.log_every},
           {"checkpoint_every", c.checkpoint_every}};
}

void from_json(const json& j, RlRunConfig& c) {
  RlRunConfig d;
  c.architecture = j.contains("architecture") ? j.at("architecture").get<Architecture>() : d.architecture;
  c.init_seed = j.value("init_seed", d.init_seed);
  c.pretrain = d.pretrain;
  if (j.contains("pretrain")) {
    const auto& p = j.at("pretrain");
    c.pretrain.steps = p.value("steps", d.pretrain.steps);
    c.pretrain.batch_size = p.value("batch_size", d.pretrain.batch_size);
    c.pretrain.adam.lr = p.value("lr", d.pretrain.adam.lr);
    c.pretrain.seed = p.value("seed", d.pretrain.seed);
  }
  c.grpo = j.contains("grpo") ? j.at("grpo").get<grpo::GrpoConfig>() : d.grpo;
  c.iterations = j.value("iterations", d.iterations);
  c.groups_per_update = j.value("groups_per_update", d.groups_per_update);
  c.num_tasks = j.value("num_tasks", d.num_tasks);
  c.task_seed = j.value("task_seed", d.task_seed);
  c.rollout_seed = j.value("rollout_seed", d.rollout_seed);
  c.eval_seed = j.value("eval_seed", d.eval_seed);
  c.eval_samples = j.value("eval_samples", d.eval_samples);
  c.log_every = j.value("log_every", d.log_every);
  c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
}

VelocityField pretrain_policy(const RlRunConfig& cfg, const std::function<void(int, double)>& on_step) {
  VelocityField model(cfg.architecture, cfg.init_seed);
  cfm_train(model, sample_training_pair, cfg.pretrain, on_step);
  return model;
}

RlRunResult run_rl(VelocityField initial, const RlRunConfig& cfg,
                   const std::function<void(const grpo::UpdateStats&, const VelocityField&)>& on_update) {
  cfg.validate();
  const auto tasks = make_task_set(cfg.task_seed, cfg.num_tasks);
  RlRunResult res{.reward_before = 0.0, .reward_after = 0.0, .history = {}, .policy = initial};
  res.reward_before = mean_sde_reward(initial, tasks, cfg.grpo.sampler, cfg.eval_seed, cfg.eval_samples);
  grpo::GrpoTrainer trainer(std::move(initial), cfg.grpo, cfg.rollout_seed);
  const auto reward = make_reward_fn();
  std::size_t cursor = 0;
  for (int it = 0; it < cfg.iterations; ++it) {
    std::vector<Vector> conds;
    for (int g = 0; g < cfg.groups_per_update; ++g) conds.push_back(tasks[cursor++ % tasks.size()].condition());
    res.history.push_back(trainer.step(conds, reward));
    if (on_update) on_update(res.history.back(), trainer.policy());
  }
  res.policy = trainer.policy();
  res.reward_after = mean_sde_reward(res.policy, tasks, cfg.grpo.sampler, cfg.eval_seed, cfg.eval_samples);
  return res;
}

}  // namespace flowrl::toy

namespace flowrl {

void to_json(nlohmann::json& j, const CfmTrainConfig& c) {
  j = nlohmann::json{{"steps", c.steps}, {"batch_size", c.batch_size}, {"lr", c.adam.lr}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, CfmTrainConfig& c) {
  CfmTrainConfig d;
  c.steps = j.value("steps", d.steps);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.adam.lr = j.value("lr", d.adam.lr);
  c.seed = j.value("seed", d.seed);
}

}  // namespace flowrl
