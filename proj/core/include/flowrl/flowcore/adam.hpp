#pragma once

#include "flowrl/flowcore/velocity_field.hpp"

namespace flowrl {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam, minimizing. Ascent callers pass the negated gradient.
class Adam {
 public:
  Adam(std::size_t n, AdamConfig cfg);

  void step(Vector& params, const Vector& grad);
  long iterations() const noexcept { return t_; }
  const AdamConfig& config() const noexcept { return cfg_; }

 private:
  AdamConfig cfg_;
  Vector m_, v_;
  long t_ = 0;
};

}  // namespace flowrl
