#include "flowrl/flowcore/analytic_path.hpp"

#include "flowrl/common/error.hpp"

namespace flowrl {

double AnalyticGaussianPath::marginal_variance(double t) const {
  return (1.0 - t) * (1.0 - t) + t * t * data_std * data_std;
}

// Cov(x0, x_t) = (1 - t) I and Cov(x1, x_t) = t s^2 I.
Vector AnalyticGaussianPath::posterior_x0(const Vector& x, double t) const {
  return (1.0 - t) / marginal_variance(t) * (x - marginal_mean(t));
}

Vector AnalyticGaussianPath::posterior_x1(const Vector& x, double t) const {
  return data_mean + t * data_std * data_std / marginal_variance(t) * (x - marginal_mean(t));
}

Vector AnalyticGaussianPath::velocity(const Vector& x, double t) const {
  return posterior_x1(x, t) - posterior_x0(x, t);
}

Vector AnalyticGaussianPath::score(const Vector& x, double t) const {
  return -(x - marginal_mean(t)) / marginal_variance(t);
}

VelocityAndScore analytic_velocity_and_score(const AnalyticGaussianPath& path, const Vector& x, double t) {
  if (!(t >= 0.0 && t < 1.0)) throw ValidationError("analytic path: t must lie in [0, 1)");
  if (!(path.data_std > 0.0)) throw ValidationError("analytic path: data_std must be positive");
  if (x.size() != path.data_mean.size()) throw ValidationError("analytic path: dimension mismatch");
  return {path.velocity(x, t), path.score(x, t)};
}

}  // namespace flowrl
