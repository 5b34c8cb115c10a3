#include "flowrl/grpo/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "flowrl/common/error.hpp"
#include "flowrl/common/rng.hpp"

namespace flowrl::grpo {

void GrpoConfig::validate() const {
  if (group_size < 2) throw ConfigError("grpo: group_size must be at least 2");
  if (!(eps_low > 0.0) || !(eps_high >= eps_low)) throw ConfigError("grpo: require 0 < eps_low <= eps_high");
  if (!(beta >= 0.0)) throw ConfigError("grpo: beta must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("grpo: lr must be positive");
  if (!(std_floor > 0.0)) throw ConfigError("grpo: std_floor must be positive");
  if (!(sampler.sigma > 0.0)) throw ConfigError("grpo: sampler sigma must be positive (policy needs a density)");
  if (max_resamples < 0) throw ConfigError("grpo: max_resamples must be >= 0");
  sampler.validate();
}

void to_json(nlohmann::json& j, const GrpoConfig& c) {
  j = nlohmann::json{{"group_size", c.group_size},
                     {"eps_low", c.eps_low},
                     {"eps_high", c.eps_high},
                     {"beta", c.beta},
                     {"lr", c.lr},
                     {"std_floor", c.std_floor},
                     {"max_log_ratio", c.max_log_ratio},
                     {"sampler", c.sampler},
                     {"on_reward_failure", c.on_reward_failure == RewardFailurePolicy::kShrink ? "shrink" : "resample"},
                     {"max_resamples", c.max_resamples}};
}

void from_json(const nlohmann::json& j, GrpoConfig& c) {
  GrpoConfig d;
  c.group_size = j.value("group_size", d.group_size);
  c.eps_low = j.value("eps_low", d.eps_low);
  c.eps_high = j.value("eps_high", d.eps_high);
  c.beta = j.value("beta", d.beta);
  c.lr = j.value("lr", d.lr);
  c.std_floor = j.value("std_floor", d.std_floor);
  c.max_log_ratio = j.value("max_log_ratio", d.max_log_ratio);
  c.sampler = j.contains("sampler") ? j.at("sampler").get<SamplerConfig>() : d.sampler;
  const auto policy = j.value("on_reward_failure", std::string("resample"));
  if (policy == "shrink") {
    c.on_reward_failure = RewardFailurePolicy::kShrink;
  } else if (policy == "resample") {
    c.on_reward_failure = RewardFailurePolicy::kResample;
  } else {
    throw ConfigError("grpo: on_reward_failure must be 'shrink' or 'resample'");
  }
  c.max_resamples = j.value("max_resamples", d.max_resamples);
}

void to_json(nlohmann::json& j, const UpdateStats& s) {
  j = nlohmann::json{{"iteration", s.iteration},         {"mean_reward", s.mean_reward},
                     {"reward_std", s.reward_std},       {"advantage_mean", s.advantage_mean},
                     {"advantage_std", s.advantage_std}, {"mean_ratio", s.mean_ratio},
                     {"max_ratio", s.max_ratio},         {"clip_fraction", s.clip_fraction},
                     {"kl", s.kl},                       {"objective", s.objective},
                     {"grad_norm", s.grad_norm},         {"ratio_clamped", s.ratio_clamped},
                     {"steps", s.steps}};
}

void TrajectoryGroup::validate() const {
  if (trajectories.size() != rewards.size()) throw ValidationError("trajectory group: reward count mismatch");
  if (trajectories.empty()) throw ValidationError("trajectory group: empty");
  const auto steps = trajectories.front().steps();
  for (const auto& tr : trajectories) {
    if (tr.steps() != steps) throw ValidationError("trajectory group: step counts differ");
    if (tr.condition.size() != condition.size() || tr.condition != condition)
      throw ValidationError("trajectory group: trajectories do not share the condition");
    if (tr.logps.size() != tr.means.size() || tr.states.size() != tr.means.size() + 1)
      throw ValidationError("trajectory group: malformed trajectory");
  }
  for (double r : rewards)
    if (!std::isfinite(r)) throw ValidationError("trajectory group: non-finite reward");
}

namespace {

double mean_of(std::span<const double> xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double population_std(std::span<const double> xs, double mean) {
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(xs.size()));
}

}  // namespace

std::vector<double> compute_advantages(std::span<const double> rewards, double std_floor) {
  if (rewards.size() < 2) throw ConfigError("compute_advantages: a group needs at least 2 rewards");
  const double m = mean_of(rewards);
  const double s = population_std(rewards, m);
  std::vector<double> adv(rewards.size(), 0.0);
  if (s < std_floor) return adv;
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - m) / s;
  return adv;
}

double importance_ratio(double logp_new, double logp_old, double max_log_ratio, bool* clamped) {
  if (!std::isfinite(logp_new) || !std::isfinite(logp_old))
    throw NumericalError("importance_ratio: non-finite log-probability");
  double lr = logp_new - logp_old;
  const bool hit = std::abs(lr) > max_log_ratio;
  if (hit) lr = std::copysign(max_log_ratio, lr);
  if (clamped) *clamped = hit;
  return std::exp(lr);
}

double clipped_term(double rho, double advantage, double eps_low, double eps_high) {
  const double unclipped = rho * advantage;
  const double clipped = std::clamp(rho, 1.0 - eps_low, 1.0 + eps_high) * advantage;
  return std::min(unclipped, clipped);
}

bool clip_active(double rho, double advantage, double eps_low, double eps_high) {
  return std::clamp(rho, 1.0 - eps_low, 1.0 + eps_high) * advantage < rho * advantage;
}

double kl_penalty(const Vector& mu_new, const Vector& mu_ref, double sigma, double dt) {
  if (!(sigma > 0.0) || !(dt > 0.0)) throw NumericalError("kl_penalty: sigma and dt must be positive");
  return (mu_new - mu_ref).squaredNorm() / (2.0 * sigma * sigma * dt);
}

SurrogateResult evaluate_surrogate(const VelocityField& policy, const VelocityField& reference,
                                   std::span<const TrajectoryGroup> groups, const GrpoConfig& cfg,
                                   bool with_gradient) {
  cfg.validate();
  if (groups.empty()) throw ValidationError("grpo: no trajectory groups");

  // Flatten every (trajectory, step) into one evaluation column.
  std::vector<double> column_adv;
  std::vector<const SdeTrajectory*> owners;
  std::vector<double> rewards_all;
  std::vector<double> adv_all;
  std::size_t n_cols = 0;
  const auto& sc = cfg.sampler;
  for (const auto& g : groups) {
    g.validate();
    if (g.trajectories.front().steps() != static_cast<std::size_t>(sc.steps))
      throw ValidationError("grpo: trajectory step count differs from sampler config");
    auto adv = compute_advantages(g.rewards, cfg.std_floor);
    for (std::size_t i = 0; i < g.trajectories.size(); ++i) {
      owners.push_back(&g.trajectories[i]);
      column_adv.push_back(adv[i]);
      rewards_all.push_back(g.rewards[i]);
      adv_all.push_back(adv[i]);
      n_cols += g.trajectories[i].steps();
    }
  }

  const auto d = static_cast<Eigen::Index>(policy.state_dim());
  const auto c = static_cast<Eigen::Index>(policy.cond_dim());
  const auto N = static_cast<Eigen::Index>(n_cols);
  Matrix x(d, N), cond(c, N);
  std::vector<double> ts(n_cols);
  {
    Eigen::Index col = 0;
    for (const auto* tr : owners) {
      for (std::size_t k = 0; k < tr->steps(); ++k, ++col) {
        x.col(col) = tr->states[k];
        if (c > 0) cond.col(col) = tr->condition;
        ts[static_cast<std::size_t>(col)] = sc.time_at(static_cast<int>(k));
      }
    }
  }

  VelocityField::Tape tape;
  const Matrix v_new = policy.forward(x, ts, cond, with_gradient ? &tape : nullptr);
  const Matrix v_ref = cfg.beta > 0.0 ? reference.forward(x, ts, cond) : Matrix();

  const double var = sc.variance();
  const double inv_n = 1.0 / static_cast<double>(n_cols);
  Matrix grad_out = Matrix::Zero(d, N);
  SurrogateResult out;
  auto& st = out.stats;
  double clip_sum = 0.0, kl_sum = 0.0, ratio_sum = 0.0, max_ratio = 0.0;
  long clipped = 0;

  Eigen::Index col = 0;
  for (std::size_t ti = 0; ti < owners.size(); ++ti) {
    const auto* tr = owners[ti];
    const double adv = column_adv[ti];
    for (std::size_t k = 0; k < tr->steps(); ++k, ++col) {
      const double t = ts[static_cast<std::size_t>(col)];
      const Vector& xk = tr->states[k];
      const Vector mu = transition_mean(xk, t, v_new.col(col), sc);
      const double logp = transition_log_prob(tr->states[k + 1], mu, sc.sigma, sc.dt());
      bool hit = false;
      const double rho = importance_ratio(logp, tr->logps[k], cfg.max_log_ratio, &hit);
      if (hit) ++st.ratio_clamped;
      ratio_sum += rho;
      max_ratio = std::max(max_ratio, rho);
      clip_sum += clipped_term(rho, adv, cfg.eps_low, cfg.eps_high);
      const bool active = clip_active(rho, adv, cfg.eps_low, cfg.eps_high);
      if (active) ++clipped;

      Vector dmu = Vector::Zero(d);
      // d(rho A)/d mu = A rho (x_next - mu) / var; zero when the clip wins.
      if (!active && !hit) dmu += (adv * rho / var) * (tr->states[k + 1] - mu);
      if (cfg.beta > 0.0) {
        const Vector mu_ref = transition_mean(xk, t, v_ref.col(col), sc);
        kl_sum += kl_penalty(mu, mu_ref, sc.sigma, sc.dt());
        dmu -= (cfg.beta / var) * (mu - mu_ref);
      }
      if (with_gradient) grad_out.col(col) = (inv_n * mean_velocity_slope(t, sc)) * dmu;
    }
  }

  out.objective = inv_n * clip_sum - cfg.beta * inv_n * kl_sum;
  st.objective = out.objective;
  st.steps = static_cast<long>(n_cols);
  st.clip_fraction = static_cast<double>(clipped) * inv_n;
  st.mean_ratio = ratio_sum * inv_n;
  st.max_ratio = max_ratio;
  st.kl = kl_sum / static_cast<double>(owners.size());
  st.mean_reward = mean_of(rewards_all);
  st.reward_std = population_std(rewards_all, st.mean_reward);
  st.advantage_mean = mean_of(adv_all);
  st.advantage_std = population_std(adv_all, st.advantage_mean);

  if (with_gradient) {
    out.grad = Vector::Zero(static_cast<Eigen::Index>(policy.num_parameters()));
    policy.backward(tape, grad_out, out.grad);
    st.grad_norm = out.grad.norm();
  }
  return out;
}

namespace {

Vector initial_noise(std::size_t d, Engine& eng) { return standard_normal(d, eng); }

}  // namespace

std::vector<TrajectoryGroup> rollout_groups(const VelocityField& policy, const RewardFn& reward,
                                            std::span<const Vector> conditions, const GrpoConfig& cfg,
                                            std::uint64_t seed, std::uint64_t first_group_index) {
  cfg.validate();
  const auto G = static_cast<std::size_t>(cfg.group_size);
  const auto d = policy.state_dim();
  const auto c = static_cast<Eigen::Index>(policy.cond_dim());
  const auto B = static_cast<Eigen::Index>(conditions.size() * G);

  std::vector<Engine> engines;
  engines.reserve(static_cast<std::size_t>(B));
  Matrix x0(static_cast<Eigen::Index>(d), B), cond(c, B);
  for (std::size_t gi = 0; gi < conditions.size(); ++gi) {
    if (conditions[gi].size() != c) throw ValidationError("rollout: condition dimension mismatch");
    for (std::size_t j = 0; j < G; ++j) {
      engines.push_back(make_engine(seed, {first_group_index + gi, j, 0}));
      const auto col = static_cast<Eigen::Index>(gi * G + j);
      x0.col(col) = initial_noise(d, engines.back());
      if (c > 0) cond.col(col) = conditions[gi];
    }
  }
  auto trajs = sde_sample_batch(policy, x0, cond, cfg.sampler, engines);

  std::vector<TrajectoryGroup> groups(conditions.size());
  for (std::size_t gi = 0; gi < conditions.size(); ++gi) {
    auto& g = groups[gi];
    g.condition = conditions[gi];
    for (std::size_t j = 0; j < G; ++j) {
      SdeTrajectory tr = std::move(trajs[gi * G + j]);
      RewardResult r = reward(tr.terminal(), g.condition);
      int attempt = 0;
      while ((!r.ok || !std::isfinite(r.value)) && cfg.on_reward_failure == RewardFailurePolicy::kResample &&
             attempt < cfg.max_resamples) {
        ++attempt;
        ++g.resampled;
        auto eng = make_engine(seed, {first_group_index + gi, j, static_cast<std::uint64_t>(attempt)});
        Vector start = initial_noise(d, eng);
        tr = sde_sample(policy, start, g.condition, cfg.sampler, eng);
        r = reward(tr.terminal(), g.condition);
      }
      if (!r.ok || !std::isfinite(r.value)) {
        ++g.dropped;
        continue;
      }
      g.trajectories.push_back(std::move(tr));
      g.rewards.push_back(r.value);
    }
    if (g.trajectories.size() < 2)
      throw Error("rollout: group " + std::to_string(first_group_index + gi) + " kept " +
                  std::to_string(g.trajectories.size()) + " trajectories after reward failures");
  }
  return groups;
}

TrajectoryGroup rollout_group(const VelocityField& policy, const RewardFn& reward, const Vector& condition,
                              const GrpoConfig& cfg, std::uint64_t seed, std::uint64_t group_index) {
  std::vector<Vector> conds{condition};
  return std::move(rollout_groups(policy, reward, conds, cfg, seed, group_index).front());
}

UpdateStats grpo_update(VelocityField& policy, const VelocityField& reference, std::span<const TrajectoryGroup> groups,
                        const GrpoConfig& cfg, Adam& optimizer) {
  auto res = evaluate_surrogate(policy, reference, groups, cfg, true);
  if (!res.grad.allFinite())
    throw NumericalError("grpo_update: non-finite gradient at update " + std::to_string(optimizer.iterations() + 1) +
                         "; update rejected");
  Vector neg = -res.grad;
  Vector params = policy.parameters();
  optimizer.step(params, neg);
  if (!params.allFinite())
    throw NumericalError("grpo_update: non-finite parameters after update " + std::to_string(optimizer.iterations()));
  policy.set_parameters(params);
  res.stats.iteration = optimizer.iterations();
  return res.stats;
}

GrpoTrainer::GrpoTrainer(VelocityField policy, GrpoConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)),
      policy_(std::move(policy)),
      reference_(policy_),
      optimizer_(policy_.num_parameters(), AdamConfig{.lr = cfg_.lr}),
      seed_(seed) {
  cfg_.validate();
}

UpdateStats GrpoTrainer::step(std::span<const Vector> conditions, const RewardFn& reward) {
  auto groups = rollout_groups(policy_, reward, conditions, cfg_, seed_, groups_issued_);
  groups_issued_ += conditions.size();
  auto stats = grpo_update(policy_, reference_, groups, cfg_, optimizer_);
  iteration_ = stats.iteration;
  return stats;
}

}  // namespace flowrl::grpo
