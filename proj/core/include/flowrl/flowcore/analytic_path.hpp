#pragma once

#include "flowrl/flowcore/velocity_field.hpp"

namespace flowrl {

/// Closed-form flow-matching path from N(0, I) noise to isotropic Gaussian
/// data N(data_mean, data_std^2 I) with independent coupling. Every quantity
/// follows from Gaussian conditioning of the jointly Gaussian (x0, x1, x_t),
/// which makes this the reference for the score and posterior identities.
struct AnalyticGaussianPath {
  Vector data_mean;
  double data_std = 1.0;

  std::size_t dim() const { return static_cast<std::size_t>(data_mean.size()); }

  Vector marginal_mean(double t) const { return t * data_mean; }
  /// Per-coordinate variance (1 - t)^2 + t^2 s^2.
  double marginal_variance(double t) const;

  Vector posterior_x0(const Vector& x, double t) const;
  Vector posterior_x1(const Vector& x, double t) const;
  /// E[x1 | x_t] - E[x0 | x_t].
  Vector velocity(const Vector& x, double t) const;
  /// grad log N(x; t mu, var_t I).
  Vector score(const Vector& x, double t) const;

  /// Conditioning is ignored; lets the path drive the generic samplers.
  Vector evaluate(const Vector& x, double t, const Vector& /*c*/) const { return velocity(x, t); }
};

struct VelocityAndScore {
  Vector velocity;
  Vector score;
};

VelocityAndScore analytic_velocity_and_score(const AnalyticGaussianPath& path, const Vector& x, double t);

}  // namespace flowrl
