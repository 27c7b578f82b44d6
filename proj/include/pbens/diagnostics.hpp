#pragma once

#include <span>
#include <utility>
#include <vector>

#include "pbens/bayes.hpp"
#include "pbens/ensemble.hpp"
#include "pbens/types.hpp"

namespace pbens {

/// Gaussian-kernel density over k points in R^d (d = 1 or 2) with Scott's
/// rule: kernel covariance = sample covariance * k^(-2/(d+4)).
class KdeDensity {
 public:
  KdeDensity(Matrix samples, Matrix bandwidth);

  Index dim() const { return samples_.cols(); }
  Index size() const { return samples_.rows(); }
  const Matrix& samples() const { return samples_; }
  const Matrix& bandwidth() const { return bandwidth_; }
  /// Per-axis kernel standard deviation.
  Vector kernel_sd() const { return bandwidth_.diagonal().cwiseSqrt(); }

  double operator()(const Vector& z) const;
  /// Density at every row of `points`.
  Vector evaluate(const Matrix& points, int threads = 1) const;

 private:
  Matrix samples_;
  Matrix bandwidth_;
  Matrix chol_inv_;  // L^{-1} with bandwidth = L L^T
  double log_norm_ = 0.0;
};

/// Rows of `samples` are points. Throws Numeric for a degenerate covariance
/// and Parameter for fewer than two points or d outside {1, 2}.
KdeDensity kde_fit(const Matrix& samples);

/// Tensor-product integration grid.
struct GridSpec {
  Index points_per_axis = 200;
  double pad_bandwidths = 3.0;
};

/// Evaluation grid with its per-axis coordinates and trapezoid weights.
struct Grid {
  std::vector<Vector> axes;
  Matrix points;   // one row per grid node
  Vector weights;  // trapezoid weight times cell volume

  static Grid covering(std::span<const KdeDensity* const> densities, const GridSpec& spec);
};

/// sum_z q(z) log(q(z)/p(z)) dz on the trapezoid grid, densities floored at 1e-300.
double kl_on_grid(const Vector& q, const Vector& p, const Vector& weights);

/// KDE of each sample set, then the trapezoidal KL[q || p] over the union
/// bounding box padded by pad_bandwidths kernel standard deviations.
double kl_numeric(const Matrix& q_samples, const Matrix& p_samples, const GridSpec& spec = {},
                  int threads = 1);

/// Spearman rank correlation with average ranks for ties.
double spearman(const Vector& a, const Vector& b);

struct KlTrajectory {
  std::vector<std::pair<Index, double>> points;  // (step, KL)
  double spearman = 0.0;  // of KL against step; 0 with fewer than two points
};

/// One KL per snapshot against a fixed reference, all on one shared grid
/// covering the reference and every snapshot.
KlTrajectory kl_trajectory(std::span<const Snapshot> snapshots, const Matrix& reference,
                           const GridSpec& spec = {}, int threads = 1);

/// Rows are particles.
Matrix particles_matrix(std::span<const Vector> particles);

struct StationarityReport {
  double lhs = 0.0;  // mean ||grad log p̃||^2
  double rhs = 0.0;  // mean sum_i (f_i - y_i)/s_i^2 * sum_j d^2 f_i / dθ_j^2
  bool satisfied = true;
  Vector lhs_terms;
  Vector rhs_terms;
  double grad_norm_mean = 0.0;
};

struct StationarityOptions {
  /// Extra fresh perturbation draws per particle added to the lhs average.
  Index fresh_draws = 0;
  std::uint64_t seed = 0;
  int threads = 1;
};

StationarityReport stationarity_monitor(const EnsembleState& state, const GaussianBayesModel& bm,
                                const Dataset& data, const StationarityOptions& options = {});

struct DirectionalDerivative {
  double estimate = 0.0;       // -(inner + trace)
  double inner_product = 0.0;  // mean grad log p . grad log p̃
  double hessian_trace = 0.0;  // mean tr H log p̃
};

/// -mean_i [grad log p(θ_i) . grad log p̃(θ_i; draw_i) + tr H log p̃(θ_i; draw_i)].
DirectionalDerivative directional_kl_derivative(const EnsembleState& state,
                                                const GaussianBayesModel& bm,
                                                const Dataset& data, int threads = 1);
double directional_kl_derivative_estimate(const EnsembleState& state,
                                          const GaussianBayesModel& bm, const Dataset& data);

/// E over draws of ||grad log p̃||^2 in closed form:
/// ||grad log p||^2 + sum_i |grad f_i|^2 / s_i^2 + sum_j 1/α_j^2.
double expected_perturbed_grad_sq(const GaussianBayesModel& bm, const Dataset& data,
                                  const Vector& theta);

}  // namespace pbens
