#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace pbens {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Regression data: one input row per point and a scalar label.
///
/// `noise_var` is optional. When non-empty it holds a per-point likelihood
/// variance that replaces the model's homoscedastic sigma^2 (used by the
/// latent classification targets).
struct Dataset {
  Matrix inputs;  // n x d
  Vector labels;  // n
  Vector noise_var;

  Index size() const { return labels.size(); }
  Index input_dim() const { return inputs.cols(); }
  bool heteroscedastic() const { return noise_var.size() != 0; }

  /// Throws Shape if inputs, labels and noise_var disagree on n.
  void validate() const;

  Dataset subset(std::span<const Index> rows) const;
};

/// Stacks equally sized vectors as rows of a matrix.
Matrix stack_rows(std::span<const Vector> rows);

}  // namespace pbens
