#include "flowrl/flowcore/adam.hpp"

#include <cmath>

#include "flowrl/common/error.hpp"

namespace flowrl {

Adam::Adam(std::size_t n, AdamConfig cfg)
    : cfg_(cfg), m_(Vector::Zero(static_cast<Eigen::Index>(n))), v_(Vector::Zero(static_cast<Eigen::Index>(n))) {
  if (!(cfg_.lr > 0.0)) throw ConfigError("adam: learning rate must be positive");
}

void Adam::step(Vector& params, const Vector& grad) {
  if (grad.size() != m_.size() || params.size() != m_.size()) throw ValidationError("adam: size mismatch");
  ++t_;
  m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
  v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseAbs2();
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  params.array() -= cfg_.lr * (m_.array() / bc1) / ((v_.array() / bc2).sqrt() + cfg_.eps);
}

}  // namespace flowrl
