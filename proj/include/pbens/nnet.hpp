#pragma once

#include <string>
#include <variant>
#include <vector>

#include "pbens/rng.hpp"
#include "pbens/types.hpp"

namespace pbens {

/// One parameter block of a flattened parameter vector. Weight blocks are
/// stored column-major, biases as a single column.
struct ParamBlock {
  Index rows = 0;
  Index cols = 0;
  bool bias = false;

  Index size() const { return rows * cols; }
};

/// Shape metadata that turns a flat theta in R^m back into per-layer blocks.
class ParamLayout {
 public:
  ParamLayout() = default;
  explicit ParamLayout(std::vector<ParamBlock> blocks);

  Index size() const { return size_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  Index offset(std::size_t block) const { return offsets_[block]; }

  std::vector<Matrix> unflatten(const Vector& theta) const;
  Vector flatten(const std::vector<Matrix>& blocks) const;

  /// 1 for bias coordinates, 0 for weights.
  Eigen::Array<bool, Eigen::Dynamic, 1> bias_mask() const;

 private:
  std::vector<ParamBlock> blocks_;
  std::vector<Index> offsets_;
  Index size_ = 0;
};

/// phi(x)_d = cos(omega_d * x - pi/4), with omega drawn once and then fixed.
struct TrigFeatureMap {
  Vector omega;
  double lengthscale = 1.0;

  static TrigFeatureMap sample(Index num_features, double lengthscale, Rng& rng);
  Index size() const { return omega.size(); }
};

struct LinearArch {
  TrigFeatureMap features;
};

/// Fully connected ReLU network with biases. widths = {input, hidden..., 1}.
struct ReluMlpArch {
  std::vector<Index> widths;
};

/// f(x) = ReLU(w1 x) + ReLU(w2 x); two weights, fixed unit output layer.
struct ToyReluArch {};

/// f(x) = theta^2 x; one parameter with nonzero curvature.
struct ToySquareArch {};

using Architecture = std::variant<LinearArch, ReluMlpArch, ToyReluArch, ToySquareArch>;

/// A batch of inputs plus per-architecture precomputation that does not
/// depend on theta (the n x D feature matrix for linear models).
struct PreparedInputs {
  Matrix inputs;
  Matrix features;

  Index size() const { return inputs.rows(); }
};

/// A scalar regression function f(x; theta) with its parameter gradient and
/// the diagonal of its parameter Hessian.
///
/// The single-point methods take x of length input_dim(). The batched methods
/// take X as an n x input_dim() matrix. ReLU'(0) is taken to be 0.
class RegressionModel {
 public:
  static RegressionModel linear(TrigFeatureMap features);
  static RegressionModel relu_mlp(std::vector<Index> widths);
  static RegressionModel toy_relu();
  static RegressionModel toy_square();

  const Architecture& architecture() const { return arch_; }
  const ParamLayout& layout() const { return layout_; }
  Index num_params() const { return layout_.size(); }
  Index input_dim() const;
  std::string name() const;

  /// True when every diagonal second derivative vanishes almost everywhere
  /// (linear features or piecewise-linear activations).
  bool zero_diagonal_curvature() const;

  double forward(const Vector& theta, const Vector& x) const;
  Vector grad(const Vector& theta, const Vector& x) const;
  Vector hessian_diag(const Vector& theta, const Vector& x) const;

  PreparedInputs prepare(const Matrix& inputs) const;

  Vector predict(const Vector& theta, const Matrix& inputs) const;
  Vector predict(const Vector& theta, const PreparedInputs& batch) const;
  /// sum_i weights_i * grad_theta f(x_i; theta) in one reverse pass.
  Vector pullback(const Vector& theta, const Matrix& inputs, const Vector& weights) const;
  Vector pullback(const Vector& theta, const PreparedInputs& batch, const Vector& weights) const;
  /// Row i holds grad_theta f(x_i; theta).
  Matrix jacobian(const Vector& theta, const Matrix& inputs) const;

  /// Throws Shape if theta or inputs do not fit the architecture.
  void check(const Vector& theta, Index input_cols) const;

 private:
  RegressionModel(Architecture arch, ParamLayout layout)
      : arch_(std::move(arch)), layout_(std::move(layout)) {}

  Architecture arch_;
  ParamLayout layout_;
};

/// Weights ~ N(0, alpha_w^2), biases ~ N(0, alpha_b^2). Arguments are
/// standard deviations.
Vector init_from_prior(const RegressionModel& model, double alpha_w, double alpha_b, Rng& rng);

}  // namespace pbens
