#include "flowrl/flowcore/flow.hpp"

#include <numbers>

namespace flowrl {

FlowPathPoint make_path_point(const Vector& x0, const Vector& x1, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw ValidationError("flow path: t must lie in [0, 1]");
  if (x0.size() != x1.size()) throw ValidationError("flow path: x0 and x1 differ in dimension");
  return {x0, x1, t, (1.0 - t) * x0 + t * x1};
}

void SamplerConfig::validate() const {
  if (steps <= 0) throw ConfigError("sampler: steps must be positive");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("sampler: sigma must be finite and >= 0");
  if (!(t_clamp > 0.0 && t_clamp < 1.0)) throw ConfigError("sampler: t_clamp must lie in (0, 1)");
}

void to_json(nlohmann::json& j, const SamplerConfig& c) {
  j = nlohmann::json{{"steps", c.steps}, {"sigma", c.sigma}, {"t_clamp", c.t_clamp}};
}

void from_json(const nlohmann::json& j, SamplerConfig& c) {
  c.steps = j.value("steps", 20);
  c.sigma = j.value("sigma", 0.9);
  c.t_clamp = j.value("t_clamp", 1.0 - 1e-4);
}

Vector posterior_x0(const Vector& x, double t, const Vector& v) { return x - t * v; }

Vector score_from_velocity(const Vector& x, double t, const Vector& v, std::optional<double> t_clamp) {
  double tc = t;
  if (t_clamp) {
    tc = std::min(t, *t_clamp);
  } else if (t >= 1.0) {
    throw NumericalError("score_from_velocity: t = " + std::to_string(t) + " hits the 1/(1-t) singularity");
  }
  return -(x - t * v) / (1.0 - tc);
}

Vector sde_drift(const Vector& x, double t, const Vector& v, const SamplerConfig& cfg) {
  const double tc = std::min(t, cfg.t_clamp);
  const double half_var = 0.5 * cfg.sigma * cfg.sigma;
  Vector drift = v - half_var * (x - t * v) / (1.0 - tc);
  if (!drift.allFinite()) throw NumericalError("non-finite drift at t = " + std::to_string(t));
  return drift;
}

Vector transition_mean(const Vector& x, double t, const Vector& v, const SamplerConfig& cfg) {
  return x + sde_drift(x, t, v, cfg) * cfg.dt();
}

double mean_velocity_slope(double t, const SamplerConfig& cfg) {
  const double tc = std::min(t, cfg.t_clamp);
  return cfg.dt() * (1.0 + 0.5 * cfg.sigma * cfg.sigma * t / (1.0 - tc));
}

double transition_log_prob(const Vector& x_next, const Vector& mean, double sigma, double dt) {
  if (!(sigma > 0.0)) throw NumericalError("transition_log_prob: sigma = 0 has no density; use the deterministic path");
  if (!(dt > 0.0)) throw NumericalError("transition_log_prob: dt must be positive");
  const double var = sigma * sigma * dt;
  const double d = static_cast<double>(x_next.size());
  return -0.5 * d * std::log(2.0 * std::numbers::pi * var) - (x_next - mean).squaredNorm() / (2.0 * var);
}

StepResult sde_step_from_velocity(const Vector& x, double t, const Vector& v, const SamplerConfig& cfg,
                                  const Vector& noise) {
  if (noise.size() != x.size()) throw ValidationError("sde_step: noise dimension mismatch");
  StepResult r;
  r.mean = transition_mean(x, t, v, cfg);
  r.variance = cfg.variance();
  r.next = r.mean + cfg.sigma * std::sqrt(cfg.dt()) * noise;
  return r;
}

Vector standard_normal(std::size_t d, Engine& eng) {
  std::normal_distribution<double> n01;
  Vector z(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = n01(eng);
  return z;
}

std::vector<SdeTrajectory> sde_sample_batch(const VelocityField& model, const Matrix& x0, const Matrix& cond,
                                            const SamplerConfig& cfg, std::span<Engine> engines) {
  cfg.validate();
  const auto batch = x0.cols();
  if (static_cast<Eigen::Index>(engines.size()) != batch) throw ValidationError("sde_sample_batch: one engine per column required");
  std::vector<SdeTrajectory> out(static_cast<std::size_t>(batch));
  for (Eigen::Index j = 0; j < batch; ++j) {
    auto& tr = out[static_cast<std::size_t>(j)];
    tr.condition = model.cond_dim() > 0 ? Vector(cond.col(j)) : Vector();
    tr.variance = cfg.variance();
    tr.states.push_back(x0.col(j));
  }
  Matrix x = x0;
  std::vector<double> ts(static_cast<std::size_t>(batch));
  for (int k = 0; k < cfg.steps; ++k) {
    const double t = cfg.time_at(k);
    std::fill(ts.begin(), ts.end(), t);
    const Matrix v = model.forward(x, ts, cond);
    for (Eigen::Index j = 0; j < batch; ++j) {
      auto& tr = out[static_cast<std::size_t>(j)];
      Vector noise = standard_normal(static_cast<std::size_t>(x.rows()), engines[static_cast<std::size_t>(j)]);
      StepResult s;
      try {
        s = sde_step_from_velocity(tr.states.back(), t, v.col(j), cfg, noise);
      } catch (const NumericalError& e) {
        throw NumericalError("sde_sample step " + std::to_string(k) + ", trajectory " + std::to_string(j) + ": " +
                             e.what());
      }
      tr.logps.push_back(cfg.sigma > 0.0 ? transition_log_prob(s.next, s.mean, cfg.sigma, cfg.dt()) : std::nan(""));
      x.col(j) = s.next;
      tr.means.push_back(std::move(s.mean));
      tr.states.push_back(std::move(s.next));
    }
  }
  return out;
}

Matrix ode_sample_batch(const VelocityField& model, const Matrix& x0, const Matrix& cond, int steps) {
  if (steps <= 0) throw ConfigError("ode_sample: steps must be positive");
  const double dt = 1.0 / static_cast<double>(steps);
  Matrix x = x0;
  std::vector<double> ts(static_cast<std::size_t>(x0.cols()));
  for (int k = 0; k < steps; ++k) {
    std::fill(ts.begin(), ts.end(), static_cast<double>(k) * dt);
    x += model.forward(x, ts, cond) * dt;
  }
  return x;
}

}  // namespace flowrl
