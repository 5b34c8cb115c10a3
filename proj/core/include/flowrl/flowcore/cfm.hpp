#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "flowrl/common/error.hpp"
#include "flowrl/common/rng.hpp"
#include "flowrl/flowcore/adam.hpp"
#include "flowrl/flowcore/flow.hpp"

namespace flowrl {

class TrainingDivergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

struct CfmSample {
  FlowPathPoint point;
  Vector condition;  // empty when the field is unconditional
};

struct LossAndGradient {
  double loss = 0.0;
  Vector grad;
};

/// Conditional flow-matching regression: mean over batch elements and state
/// coordinates of (v_theta(x_t, t, c) - (x1 - x0))^2, with its exact
/// parameter gradient.
LossAndGradient cfm_loss(const VelocityField& model, std::span<const CfmSample> batch);

/// Draws one (data sample x1, condition) pair.
using DataSampler = std::function<std::pair<Vector, Vector>(Engine&)>;

struct CfmTrainConfig {
  int steps = 2000;
  int batch_size = 64;
  AdamConfig adam{.lr = 1e-3};
  std::uint64_t seed = 0;
};

/// Pretrains with x0 ~ N(0, I), t ~ U[0, 1]. Returns the per-step losses.
/// The optional callback sees (step, loss) after every update.
std::vector<double> cfm_train(VelocityField& model, const DataSampler& data, const CfmTrainConfig& cfg,
                              const std::function<void(int, double)>& on_step = {});

}  // namespace flowrl
