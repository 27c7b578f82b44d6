#pragma once

#include <span>

#include "pbens/nnet.hpp"
#include "pbens/rng.hpp"
#include "pbens/types.hpp"

namespace pbens {

/// Gaussian likelihood N(y; f(x; theta), sigma2) with an isotropic Gaussian
/// prior per parameter group: N(0, alpha2_w) on weights, N(0, alpha2_b) on
/// biases.
struct GaussianBayesModel {
  RegressionModel model;
  double sigma2 = 1.0;
  double alpha2_w = 1.0;
  double alpha2_b = 1.0;

  void validate() const;
  Vector prior_variances() const;
  /// Per-point likelihood variances: data.noise_var when present, else sigma2.
  Vector noise_variances(const Dataset& data) const;
};

/// One particle's frozen perturbation: label noise ỹ0 (ỹ = y + ỹ0) and the
/// prior anchor θ̃.
struct PerturbationDraw {
  Vector label_noise;
  Vector anchor;

  static PerturbationDraw zero(Index n, Index m);
};

/// log p̃(D, θ) and its gradient for one (model, dataset) pair, with the
/// theta-independent work (features, variances, constants) done once.
/// The referenced model and dataset must outlive the objective.
class JointObjective {
 public:
  JointObjective(const GaussianBayesModel& bm, const Dataset& data);

  double value(const Vector& theta, const PerturbationDraw& draw) const;
  Vector gradient(const Vector& theta, const PerturbationDraw& draw) const;
  /// Returns the value and writes the gradient into `grad`.
  double value_and_gradient(const Vector& theta, const PerturbationDraw& draw, Vector& grad) const;

  const GaussianBayesModel& bayes_model() const { return *bm_; }
  const Dataset& data() const { return *data_; }
  const Vector& noise_variances() const { return noise_var_; }
  const Vector& prior_variances() const { return prior_var_; }

 private:
  void check(const Vector& theta, const PerturbationDraw& draw) const;

  const GaussianBayesModel* bm_;
  const Dataset* data_;
  PreparedInputs batch_;
  Vector noise_var_;
  Vector prior_var_;
  double log_normalizer_ = 0.0;
};

/// ỹ0_i ~ N(0, s_i^2) with the per-point variance, θ̃_j ~ N(0, α_j^2).
PerturbationDraw perturb(const GaussianBayesModel& bm, const Dataset& data, Rng& rng);

// Log densities include every normalizing constant.
double log_joint(const GaussianBayesModel& bm, const Dataset& data, const Vector& theta);
double log_joint_perturbed(const GaussianBayesModel& bm, const Dataset& data,
                           const PerturbationDraw& draw, const Vector& theta);

Vector grad_log_joint(const GaussianBayesModel& bm, const Dataset& data, const Vector& theta);
Vector grad_log_joint_perturbed(const GaussianBayesModel& bm, const Dataset& data,
                                const PerturbationDraw& draw, const Vector& theta);

/// tr H log p = -sum_i |grad f_i|^2 / s_i^2 - sum_j 1/α_j^2
///              - sum_i (f_i - y_i)/s_i^2 * sum_j d^2 f_i / dθ_j^2
double hessian_trace_log_joint(const GaussianBayesModel& bm, const Dataset& data,
                               const Vector& theta);
/// The unperturbed trace plus sum_i (ỹ0_i / s_i^2) * sum_j d^2 f_i / dθ_j^2.
double hessian_trace_log_joint_perturbed(const GaussianBayesModel& bm, const Dataset& data,
                                         const PerturbationDraw& draw, const Vector& theta);

/// Per-point sums sum_j d^2 f(x_i) / dθ_j^2.
Vector curvature_sums(const RegressionModel& model, const Vector& theta, const Matrix& inputs);

/// k x n matrix of f(x_i; θ_p).
Matrix predict_particles(const RegressionModel& model, std::span<const Vector> particles,
                         const Matrix& inputs);

/// -(1/n) sum_i log[(1/k) sum_p N(y_i; mean_pi, sigma2)] in log-sum-exp form.
double mixture_mnll(const Matrix& predictions, const Vector& labels, double sigma2);
/// RMSE of the column means of `predictions` against labels.
double mean_prediction_rmse(const Matrix& predictions, const Vector& labels);

double predictive_mnll(const GaussianBayesModel& bm, std::span<const Vector> particles,
                       const Dataset& testset);
double rmse(const RegressionModel& model, std::span<const Vector> particles,
            const Dataset& testset);

}  // namespace pbens
