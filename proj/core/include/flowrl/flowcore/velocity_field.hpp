#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace flowrl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Activation { kSilu, kTanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// Shape of the conditional velocity network. The network input is the
/// concatenation [x, sinusoidal(t), c].
struct Architecture {
  std::size_t state_dim = 2;
  std::size_t cond_dim = 0;
  std::size_t time_features = 16;  // even; sin/cos pairs
  std::vector<std::size_t> hidden = {128, 128, 128};
  Activation activation = Activation::kSilu;

  std::size_t input_dim() const { return state_dim + time_features + cond_dim; }
  std::size_t num_parameters() const;
  void validate() const;

  bool operator==(const Architecture&) const = default;
};

void to_json(nlohmann::json& j, const Architecture& a);
void from_json(const nlohmann::json& j, Architecture& a);

/// Sinusoidal time features, frequencies spaced geometrically in [1, 64].
Vector time_embedding(double t, std::size_t features);

/// Multilayer perceptron v_theta(x, t, c) over a flat parameter vector.
///
/// Forward evaluation processes each column independently with a
/// matrix-vector product, so the result for one input never depends on what
/// else is in the batch. The GRPO importance ratio relies on this: a
/// trajectory recomputed under unchanged parameters reproduces its stored
/// log-probability bit for bit.
class VelocityField {
 public:
  /// Activations recorded by forward() for a later backward().
  struct Tape {
    std::vector<Matrix> inputs;       // input to layer l (post-activation of l-1)
    std::vector<Matrix> preactivations;  // W x + b of each hidden layer
  };

  VelocityField(Architecture arch, std::uint64_t init_seed);
  VelocityField(Architecture arch, Vector parameters);

  const Architecture& architecture() const noexcept { return arch_; }
  std::size_t state_dim() const noexcept { return arch_.state_dim; }
  std::size_t cond_dim() const noexcept { return arch_.cond_dim; }
  std::size_t num_parameters() const noexcept { return static_cast<std::size_t>(params_.size()); }

  const Vector& parameters() const noexcept { return params_; }
  void set_parameters(const Vector& p);
  Vector& mutable_parameters() noexcept { return params_; }

  Vector evaluate(const Vector& x, double t, const Vector& c) const;

  /// Batched evaluation; x is d x B, c is cond_dim x B (may have zero rows),
  /// t has B entries.
  Matrix forward(const Matrix& x, std::span<const double> t, const Matrix& c,
                 Tape* tape = nullptr) const;

  /// Accumulates into grad the gradient of sum_j <grad_out.col(j), v_j>
  /// with respect to the parameters.
  void backward(const Tape& tape, const Matrix& grad_out, Vector& grad) const;

  bool all_finite() const { return params_.allFinite(); }

 private:
  struct LayerView {
    std::size_t in, out, weight_offset, bias_offset;
  };

  Matrix assemble_input(const Matrix& x, std::span<const double> t, const Matrix& c) const;
  void build_layout();

  Architecture arch_;
  Vector params_;
  std::vector<LayerView> layers_;
};

}  // namespace flowrl
