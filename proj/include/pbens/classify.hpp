#pragma once

#include <span>

#include "pbens/bayes.hpp"
#include "pbens/types.hpp"

namespace pbens {

/// Two latent regression targets per point in log space, with per-point
/// variances. Channel a carries class-1 evidence, channel b class 0.
struct LatentTargets {
  Vector mean_a, mean_b;
  Vector var_a, var_b;
  double alpha_eps = 0.01;

  Index size() const { return mean_a.size(); }
};

/// Log-normal moment match of Gamma(shape, 1): s^2 = log(1/shape + 1),
/// mean = log(shape) - s^2/2.
struct LogNormalMoments {
  double mean = 0.0;
  double var = 0.0;
};
LogNormalMoments gamma_to_lognormal(double shape);

/// Label 1 -> Beta(1+alpha_eps, alpha_eps), label 0 -> Beta(alpha_eps, 1+alpha_eps);
/// each Beta parameter becomes one Gamma(., 1) channel.
LatentTargets labels_to_latent(const Vector& labels, double alpha_eps = 0.01);

/// Regression dataset for one channel: labels are the latent means and
/// noise_var the latent variances.
Dataset latent_dataset(const Matrix& inputs, const LatentTargets& targets, bool channel_a);

/// exp(f_a) / (exp(f_a) + exp(f_b)), evaluated without overflow.
double latent_to_prob(double f_a, double f_b);
Vector latent_to_prob(const Vector& f_a, const Vector& f_b);
Matrix latent_to_prob(const Matrix& f_a, const Matrix& f_b);

/// Ensemble class-1 probability per input: the average over paired particles
/// (channel a particle p with channel b particle p).
Vector ensemble_class_prob(const RegressionModel& model_a, std::span<const Vector> particles_a,
                           const RegressionModel& model_b, std::span<const Vector> particles_b,
                           const Matrix& inputs);

}  // namespace pbens
