#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowrl/common/error.hpp"
#include "flowrl/common/rng.hpp"
#include "flowrl/flowcore/velocity_field.hpp"

namespace flowrl {

/// Point on the linear interpolation path x_t = (1 - t) x0 + t x1.
struct FlowPathPoint {
  Vector x0;
  Vector x1;
  double t = 0.0;
  Vector xt;
};

FlowPathPoint make_path_point(const Vector& x0, const Vector& x1, double t);

struct SamplerConfig {
  int steps = 20;
  double sigma = 0.9;
  double t_clamp = 1.0 - 1e-4;

  double dt() const { return 1.0 / static_cast<double>(steps); }
  double time_at(int k) const { return static_cast<double>(k) * dt(); }
  double variance() const { return sigma * sigma * dt(); }
  void validate() const;
};

void to_json(nlohmann::json& j, const SamplerConfig& c);
void from_json(const nlohmann::json& j, SamplerConfig& c);

/// E[x0 | x_t] = x - t v.
Vector posterior_x0(const Vector& x, double t, const Vector& v);

/// grad log p_t(x) = -(x - t v) / (1 - t). With a clamp the denominator uses
/// min(t, t_clamp); without one, t >= 1 is a singularity and throws.
Vector score_from_velocity(const Vector& x, double t, const Vector& v,
                           std::optional<double> t_clamp = std::nullopt);

/// Drift of the marginal-preserving forward SDE:
/// v - (sigma^2 / 2) (x - t v) / (1 - t).
Vector sde_drift(const Vector& x, double t, const Vector& v, const SamplerConfig& cfg);

/// Gaussian transition mean x + drift * dt.
Vector transition_mean(const Vector& x, double t, const Vector& v, const SamplerConfig& cfg);

/// d mean / d v: the mean is affine in v with this scalar slope.
double mean_velocity_slope(double t, const SamplerConfig& cfg);

/// log N(x_next; mean, sigma^2 dt I).
double transition_log_prob(const Vector& x_next, const Vector& mean, double sigma, double dt);

struct StepResult {
  Vector next;
  Vector mean;
  double variance = 0.0;
};

/// Euler-Maruyama step given the velocity already evaluated at (x, t).
StepResult sde_step_from_velocity(const Vector& x, double t, const Vector& v, const SamplerConfig& cfg,
                                  const Vector& noise);

/// Anything with evaluate(x, t, c) -> Vector can drive the samplers.
template <typename F>
concept VelocitySource = requires(const F& f, const Vector& x, double t, const Vector& c) {
  { f.evaluate(x, t, c) } -> std::convertible_to<Vector>;
};

template <VelocitySource F>
StepResult sde_step(const Vector& x, double t, const F& model, const Vector& cond, const SamplerConfig& cfg,
                    const Vector& noise) {
  return sde_step_from_velocity(x, t, model.evaluate(x, t, cond), cfg, noise);
}

struct SdeTrajectory {
  std::vector<Vector> states;  // T + 1 entries, t = 0 .. 1
  std::vector<Vector> means;   // T entries
  double variance = 0.0;       // sigma^2 dt, shared by every step
  std::vector<double> logps;   // T entries; NaN when sigma == 0
  Vector condition;

  std::size_t steps() const { return means.size(); }
  const Vector& terminal() const { return states.back(); }
};

Vector standard_normal(std::size_t d, Engine& eng);

template <VelocitySource F>
SdeTrajectory sde_sample(const F& model, const Vector& x0, const Vector& cond, const SamplerConfig& cfg,
                         Engine& eng) {
  cfg.validate();
  if (!x0.allFinite()) throw ValidationError("sde_sample: non-finite initial state");
  SdeTrajectory traj;
  traj.condition = cond;
  traj.variance = cfg.variance();
  traj.states.reserve(static_cast<std::size_t>(cfg.steps) + 1);
  traj.states.push_back(x0);
  for (int k = 0; k < cfg.steps; ++k) {
    const double t = cfg.time_at(k);
    Vector noise = standard_normal(static_cast<std::size_t>(x0.size()), eng);
    StepResult s;
    try {
      s = sde_step(traj.states.back(), t, model, cond, cfg, noise);
    } catch (const NumericalError& e) {
      throw NumericalError("sde_sample step " + std::to_string(k) + ": " + e.what());
    }
    traj.logps.push_back(cfg.sigma > 0.0 ? transition_log_prob(s.next, s.mean, cfg.sigma, cfg.dt())
                                         : std::nan(""));
    traj.means.push_back(std::move(s.mean));
    traj.states.push_back(std::move(s.next));
  }
  return traj;
}

template <VelocitySource F>
std::vector<Vector> ode_sample(const F& model, const Vector& x0, const Vector& cond, int steps) {
  if (steps <= 0) throw ConfigError("ode_sample: steps must be positive");
  const double dt = 1.0 / static_cast<double>(steps);
  std::vector<Vector> states{x0};
  for (int k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    const Vector& x = states.back();
    Vector v = model.evaluate(x, t, cond);
    if (!v.allFinite()) throw NumericalError("ode_sample: non-finite velocity at step " + std::to_string(k));
    states.push_back(x + v * dt);
  }
  return states;
}

/// Batched SDE sampling for a network policy. Column j of x0/cond starts
/// trajectory j, whose noise comes only from engines[j]; results equal
/// sde_sample run per trajectory with the same engine.
std::vector<SdeTrajectory> sde_sample_batch(const VelocityField& model, const Matrix& x0, const Matrix& cond,
                                            const SamplerConfig& cfg, std::span<Engine> engines);

/// Deterministic Euler ODE integration of a batch; returns terminal states.
Matrix ode_sample_batch(const VelocityField& model, const Matrix& x0, const Matrix& cond, int steps);

}  // namespace flowrl
