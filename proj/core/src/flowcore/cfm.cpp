#include "flowrl/flowcore/cfm.hpp"

#include <cmath>

namespace flowrl {

LossAndGradient cfm_loss(const VelocityField& model, std::span<const CfmSample> batch) {
  if (batch.empty()) throw ValidationError("cfm_loss: empty batch");
  const auto d = static_cast<Eigen::Index>(model.state_dim());
  const auto c = static_cast<Eigen::Index>(model.cond_dim());
  const auto n = static_cast<Eigen::Index>(batch.size());
  Matrix xt(d, n), target(d, n), cond(c, n);
  std::vector<double> ts(batch.size());
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& s = batch[static_cast<std::size_t>(j)];
    if (!(s.point.t >= 0.0 && s.point.t <= 1.0)) throw ValidationError("cfm_loss: t outside [0, 1]");
    xt.col(j) = s.point.xt;
    target.col(j) = s.point.x1 - s.point.x0;
    if (c > 0) cond.col(j) = s.condition;
    ts[static_cast<std::size_t>(j)] = s.point.t;
  }

  VelocityField::Tape tape;
  const Matrix v = model.forward(xt, ts, cond, &tape);
  const Matrix residual = v - target;
  const double denom = static_cast<double>(d * n);
  LossAndGradient out;
  out.loss = residual.squaredNorm() / denom;
  if (!std::isfinite(out.loss)) throw TrainingDivergenceError("cfm_loss: non-finite loss");
  out.grad = Vector::Zero(static_cast<Eigen::Index>(model.num_parameters()));
  model.backward(tape, (2.0 / denom) * residual, out.grad);
  return out;
}

std::vector<double> cfm_train(VelocityField& model, const DataSampler& data, const CfmTrainConfig& cfg,
                              const std::function<void(int, double)>& on_step) {
  if (cfg.steps < 0 || cfg.batch_size <= 0) throw ConfigError("cfm_train: invalid steps or batch size");
  Adam opt(model.num_parameters(), cfg.adam);
  auto eng = make_engine(cfg.seed, {0xcf3});
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(cfg.steps));
  std::vector<CfmSample> batch(static_cast<std::size_t>(cfg.batch_size));
  for (int step = 0; step < cfg.steps; ++step) {
    for (auto& s : batch) {
      auto [x1, cond] = data(eng);
      Vector x0 = standard_normal(static_cast<std::size_t>(x1.size()), eng);
      s.point = make_path_point(x0, x1, unif(eng));
      s.condition = std::move(cond);
    }
    auto lg = cfm_loss(model, batch);
    if (!lg.grad.allFinite()) throw TrainingDivergenceError("cfm_train: non-finite gradient at step " + std::to_string(step));
    opt.step(model.mutable_parameters(), lg.grad);
    losses.push_back(lg.loss);
    if (on_step) on_step(step, lg.loss);
  }
  return losses;
}

}  // namespace flowrl
