#pragma once

#include <cstdint>
#include <span>

#include "pbens/rng.hpp"
#include "pbens/types.hpp"

namespace pbens {

/// phi(x)_d = cos(omega_d x - pi/4).
Vector trig_features(double x, const Vector& omega);
/// D x n design matrix with column i = phi(x_i).
Matrix design_matrix(const Vector& inputs, const Vector& omega);

/// Exact posterior of w under y = w^T phi(x) + N(0, sigma2), w ~ N(0, alpha2 I).
struct GaussianPosterior {
  Vector mean;        // w̄ = (1/σ²) A⁻¹ Φ y
  Matrix covariance;  // A⁻¹
  Matrix precision;   // A = (1/σ²) Φ Φᵀ + (1/α²) I
  double log_det_precision = 0.0;

  Index dim() const { return mean.size(); }
};

GaussianPosterior posterior_exact(const Matrix& design, const Vector& labels, double sigma2,
                                  double alpha2);

/// Closed-form maximizer of the perturbed joint for the linear-Gaussian model:
///   w* = (1/σ²) A⁻¹ Φ (y + ε) + (1/α²) A⁻¹ w̃.
/// The precision is factorized once; each solve is two triangular sweeps.
class PerturbedMapSolver {
 public:
  PerturbedMapSolver(const Matrix& design, const Vector& labels, double sigma2, double alpha2);

  Vector solve(const Vector& label_noise, const Vector& anchor) const;
  /// Draws ε ~ N(0, σ² I_n), w̃ ~ N(0, α² I_D) and returns w*.
  Vector sample(Rng& rng) const;

  Index dim() const { return design_.rows(); }

 private:
  Matrix design_;
  Vector labels_;
  double sigma2_;
  double alpha2_;
  Eigen::LLT<Matrix> precision_llt_;
};

Vector sample_w_star(const Matrix& design, const Vector& labels, double sigma2, double alpha2,
                     Rng& rng);

/// KL[N(q_mean, q_cov) || N(p_mean, p_cov)]. Throws Numeric on non-SPD input.
double kl_gaussians(const Vector& q_mean, const Matrix& q_cov, const Vector& p_mean,
                    const Matrix& p_cov);

/// KL[N(q_mean, q_cov) || posterior] using the cached precision; cheaper than
/// kl_gaussians when the same posterior is compared against many fits.
double kl_to_posterior(const Vector& q_mean, const Matrix& q_cov,
                       const GaussianPosterior& posterior);

struct SampleMoments {
  Vector mean;
  Matrix covariance;  // unbiased, (k - 1) denominator
};

/// Moments of the rows of `samples` (k x D). `ridge` is added to the diagonal.
SampleMoments sample_moments(const Matrix& samples, double ridge = 0.0);
SampleMoments sample_moments(std::span<const Vector> samples, double ridge = 0.0);

/// Draws k rows from N(mean, covariance).
Matrix sample_gaussian(const GaussianPosterior& posterior, Index k, Rng& rng);

/// Mean over `reps` populations of KL[moments of k exact posterior samples || posterior].
/// Repetition r uses derive_seed(seed, r). `ridge` is passed to sample_moments.
double self_distance(const GaussianPosterior& posterior, Index k, int reps, std::uint64_t seed,
                     double ridge = 0.0);

}  // namespace pbens
