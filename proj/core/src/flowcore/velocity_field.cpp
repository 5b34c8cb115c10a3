#include "flowrl/flowcore/velocity_field.hpp"

#include <cmath>

#include "flowrl/common/error.hpp"
#include "flowrl/common/rng.hpp"

namespace flowrl {

namespace {

double activate(Activation a, double z) {
  switch (a) {
    case Activation::kSilu:
      return z / (1.0 + std::exp(-z));
    case Activation::kTanh:
      return std::tanh(z);
  }
  return z;
}

double activate_derivative(Activation a, double z) {
  switch (a) {
    case Activation::kSilu: {
      const double s = 1.0 / (1.0 + std::exp(-z));
      return s * (1.0 + z * (1.0 - s));
    }
    case Activation::kTanh: {
      const double th = std::tanh(z);
      return 1.0 - th * th;
    }
  }
  return 1.0;
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kSilu:
      return "silu";
    case Activation::kTanh:
      return "tanh";
  }
  return "unknown";
}

Activation activation_from_string(const std::string& name) {
  if (name == "silu") return Activation::kSilu;
  if (name == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation '" + name + "'");
}

std::size_t Architecture::num_parameters() const {
  std::size_t n = 0;
  std::size_t in = input_dim();
  for (auto w : hidden) {
    n += w * in + w;
    in = w;
  }
  return n + state_dim * in + state_dim;
}

void Architecture::validate() const {
  if (state_dim == 0) throw ConfigError("architecture: state_dim must be positive");
  if (time_features % 2 != 0) throw ConfigError("architecture: time_features must be even");
  for (auto w : hidden)
    if (w == 0) throw ConfigError("architecture: hidden widths must be positive");
}

void to_json(nlohmann::json& j, const Architecture& a) {
  j = nlohmann::json{{"state_dim", a.state_dim},
                     {"cond_dim", a.cond_dim},
                     {"time_features", a.time_features},
                     {"hidden", a.hidden},
                     {"activation", to_string(a.activation)}};
}

void from_json(const nlohmann::json& j, Architecture& a) {
  a.state_dim = j.at("state_dim").get<std::size_t>();
  a.cond_dim = j.value("cond_dim", std::size_t{0});
  a.time_features = j.value("time_features", std::size_t{16});
  a.hidden = j.value("hidden", std::vector<std::size_t>{128, 128, 128});
  a.activation = activation_from_string(j.value("activation", std::string("silu")));
}

Vector time_embedding(double t, std::size_t features) {
  Vector e(static_cast<Eigen::Index>(features));
  const std::size_t n = features / 2;
  for (std::size_t k = 0; k < n; ++k) {
    const double w = n > 1 ? std::pow(64.0, static_cast<double>(k) / static_cast<double>(n - 1)) : 1.0;
    e[static_cast<Eigen::Index>(2 * k)] = std::sin(w * t);
    e[static_cast<Eigen::Index>(2 * k + 1)] = std::cos(w * t);
  }
  return e;
}

VelocityField::VelocityField(Architecture arch, std::uint64_t init_seed) : arch_(std::move(arch)) {
  arch_.validate();
  build_layout();
  params_ = Vector::Zero(static_cast<Eigen::Index>(arch_.num_parameters()));
  auto eng = make_engine(init_seed, {0x1a11});
  for (const auto& l : layers_) {
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(l.in)));
    for (std::size_t i = 0; i < l.in * l.out; ++i)
      params_[static_cast<Eigen::Index>(l.weight_offset + i)] = dist(eng);
  }
}

VelocityField::VelocityField(Architecture arch, Vector parameters)
    : arch_(std::move(arch)), params_(std::move(parameters)) {
  arch_.validate();
  build_layout();
  if (static_cast<std::size_t>(params_.size()) != arch_.num_parameters())
    throw ConfigError("parameter count " + std::to_string(params_.size()) +
                      " does not match architecture (" + std::to_string(arch_.num_parameters()) + ")");
  if (!params_.allFinite()) throw NumericalError("non-finite parameters");
}

void VelocityField::build_layout() {
  layers_.clear();
  std::size_t in = arch_.input_dim();
  std::size_t off = 0;
  auto add = [&](std::size_t out) {
    layers_.push_back({in, out, off, off + in * out});
    off += in * out + out;
    in = out;
  };
  for (auto w : arch_.hidden) add(w);
  add(arch_.state_dim);
}

void VelocityField::set_parameters(const Vector& p) {
  if (p.size() != params_.size()) throw ConfigError("set_parameters: size mismatch");
  params_ = p;
}

Matrix VelocityField::assemble_input(const Matrix& x, std::span<const double> t, const Matrix& c) const {
  const auto batch = x.cols();
  if (static_cast<std::size_t>(x.rows()) != arch_.state_dim)
    throw ValidationError("velocity field: state has " + std::to_string(x.rows()) + " rows, expected " +
                          std::to_string(arch_.state_dim));
  if (static_cast<Eigen::Index>(t.size()) != batch) throw ValidationError("velocity field: time count mismatch");
  if (arch_.cond_dim > 0 && (static_cast<std::size_t>(c.rows()) != arch_.cond_dim || c.cols() != batch))
    throw ValidationError("velocity field: condition shape mismatch");

  const auto d = static_cast<Eigen::Index>(arch_.state_dim);
  const auto f = static_cast<Eigen::Index>(arch_.time_features);
  Matrix in(static_cast<Eigen::Index>(arch_.input_dim()), batch);
  in.topRows(d) = x;
  for (Eigen::Index j = 0; j < batch; ++j) in.block(d, j, f, 1) = time_embedding(t[static_cast<std::size_t>(j)], arch_.time_features);
  if (arch_.cond_dim > 0) in.bottomRows(static_cast<Eigen::Index>(arch_.cond_dim)) = c;
  return in;
}

Matrix VelocityField::forward(const Matrix& x, std::span<const double> t, const Matrix& c, Tape* tape) const {
  Matrix h = assemble_input(x, t, c);
  if (tape) {
    tape->inputs.clear();
    tape->preactivations.clear();
  }
  const auto batch = h.cols();
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const auto& l = layers_[li];
    Eigen::Map<const Matrix> W(params_.data() + l.weight_offset, static_cast<Eigen::Index>(l.out),
                               static_cast<Eigen::Index>(l.in));
    Eigen::Map<const Vector> b(params_.data() + l.bias_offset, static_cast<Eigen::Index>(l.out));
    Matrix z(static_cast<Eigen::Index>(l.out), batch);
    for (Eigen::Index j = 0; j < batch; ++j) {
      z.col(j).noalias() = W * h.col(j);
      z.col(j) += b;
    }
    if (tape) tape->inputs.push_back(h);
    const bool last = li + 1 == layers_.size();
    if (last) return z;
    if (tape) tape->preactivations.push_back(z);
    h = z.unaryExpr([a = arch_.activation](double v) { return activate(a, v); });
  }
  return h;  // unreachable: there is always an output layer
}

void VelocityField::backward(const Tape& tape, const Matrix& grad_out, Vector& grad) const {
  if (grad.size() != params_.size()) grad = Vector::Zero(params_.size());
  if (tape.inputs.size() != layers_.size()) throw Error("backward: tape does not match network");
  Matrix delta = grad_out;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const auto& l = layers_[k];
    const Matrix& in = tape.inputs[k];
    Eigen::Map<Matrix> gW(grad.data() + l.weight_offset, static_cast<Eigen::Index>(l.out),
                          static_cast<Eigen::Index>(l.in));
    Eigen::Map<Vector> gb(grad.data() + l.bias_offset, static_cast<Eigen::Index>(l.out));
    gW.noalias() += delta * in.transpose();
    gb += delta.rowwise().sum();
    if (k == 0) break;
    Eigen::Map<const Matrix> W(params_.data() + l.weight_offset, static_cast<Eigen::Index>(l.out),
                               static_cast<Eigen::Index>(l.in));
    Matrix back = W.transpose() * delta;
    const Matrix& z = tape.preactivations[k - 1];
    delta = back.cwiseProduct(z.unaryExpr([a = arch_.activation](double v) { return activate_derivative(a, v); }));
  }
}

Vector VelocityField::evaluate(const Vector& x, double t, const Vector& c) const {
  const double ts[1] = {t};
  Matrix cm = arch_.cond_dim > 0 ? Matrix(c) : Matrix(0, 1);
  return forward(Matrix(x), ts, cm).col(0);
}

}  // namespace flowrl
