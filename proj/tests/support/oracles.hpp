#pragma once

// Independent reference computations used by the unit and acceptance tests.
// Each one takes a different route from the library code it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

/// log N(x; mean, cov) through a Cholesky factor of the full covariance.
inline double dense_gaussian_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const Eigen::VectorXd z = llt.matrixL().solve(x - mean);
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < cov.rows(); ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * (z.squaredNorm() + logdet + static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi));
}

/// Posterior mean of block a given block b = xb for a joint Gaussian.
inline Eigen::VectorXd gaussian_condition(const Eigen::VectorXd& mu_a, const Eigen::VectorXd& mu_b,
                                          const Eigen::MatrixXd& s_ab, const Eigen::MatrixXd& s_bb,
                                          const Eigen::VectorXd& xb) {
  return mu_a + s_ab * s_bb.ldlt().solve(xb - mu_b);
}

/// Joint-Gaussian view of the path x_t = (1-t) x0 + t x1, x0 ~ N(0, I),
/// x1 ~ N(mu1, s^2 I), built from covariance blocks rather than the closed forms.
struct GaussianPathOracle {
  Eigen::VectorXd mu1;
  double s;

  Eigen::MatrixXd var_xt(double t) const {
    const auto d = mu1.size();
    return ((1 - t) * (1 - t) + t * t * s * s) * Eigen::MatrixXd::Identity(d, d);
  }
  Eigen::VectorXd e_x0(const Eigen::VectorXd& x, double t) const {
    const auto d = mu1.size();
    const Eigen::MatrixXd c = (1 - t) * Eigen::MatrixXd::Identity(d, d);
    return gaussian_condition(Eigen::VectorXd::Zero(d), t * mu1, c, var_xt(t), x);
  }
  Eigen::VectorXd e_x1(const Eigen::VectorXd& x, double t) const {
    const auto d = mu1.size();
    const Eigen::MatrixXd c = t * s * s * Eigen::MatrixXd::Identity(d, d);
    return gaussian_condition(mu1, t * mu1, c, var_xt(t), x);
  }
  Eigen::VectorXd velocity(const Eigen::VectorXd& x, double t) const { return e_x1(x, t) - e_x0(x, t); }
  /// Gradient of log N(x; t mu1, var_t) by central differences of the dense log-density.
  Eigen::VectorXd score_fd(const Eigen::VectorXd& x, double t, double h = 1e-5) const {
    Eigen::VectorXd g(x.size());
    const Eigen::MatrixXd cov = var_xt(t);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      Eigen::VectorXd xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      g[i] = (dense_gaussian_logpdf(xp, t * mu1, cov) - dense_gaussian_logpdf(xm, t * mu1, cov)) / (2 * h);
    }
    return g;
  }
};

/// KL(N(m1, v) || N(m2, v)) in 1-d by Simpson quadrature of p log(p/q).
inline double kl_quadrature_1d(double m1, double m2, double var, int n = 20000) {
  const double sd = std::sqrt(var);
  const double lo = std::min(m1, m2) - 12 * sd, hi = std::max(m1, m2) + 12 * sd;
  const double h = (hi - lo) / n;
  auto f = [&](double x) {
    const double lp = -0.5 * (x - m1) * (x - m1) / var - 0.5 * std::log(2 * std::numbers::pi * var);
    const double lq = -0.5 * (x - m2) * (x - m2) / var - 0.5 * std::log(2 * std::numbers::pi * var);
    return std::exp(lp) * (lp - lq);
  };
  double acc = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) acc += f(lo + i * h) * (i % 2 ? 4 : 2);
  return acc * h / 3;
}

/// Optimal k-center radius by exhaustive search over center subsets.
inline double brute_force_kcenter_radius(const std::vector<Eigen::VectorXd>& pts, std::size_t k) {
  const std::size_t n = pts.size();
  std::vector<int> mask(n, 0);
  std::fill(mask.end() - static_cast<long>(k), mask.end(), 1);
  double best = std::numeric_limits<double>::infinity();
  do {
    double r = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < n; ++c)
        if (mask[c]) d = std::min(d, (pts[i] - pts[c]).norm());
      r = std::max(r, d);
    }
    best = std::min(best, r);
  } while (std::next_permutation(mask.begin(), mask.end()));
  return best;
}

/// Central finite-difference gradient.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& p,
                                   double h = 1e-6) {
  Eigen::VectorXd g(p.size());
  Eigen::VectorXd q = p;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double orig = q[i];
    q[i] = orig + h;
    const double fp = f(q);
    q[i] = orig - h;
    const double fm = f(q);
    q[i] = orig;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

inline double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), 1e-12});
}

inline double mean(const std::vector<double>& xs) {
  double s = 0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline double sample_var(const std::vector<double>& xs) {
  const double m = mean(xs);
  double s = 0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size() - 1);
}

}  // namespace oracle
