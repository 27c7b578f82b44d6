#include "pbens/classify.hpp"

#include <cmath>

#include "pbens/error.hpp"

namespace pbens {

LogNormalMoments gamma_to_lognormal(double shape) {
  require(shape > 0.0 && std::isfinite(shape), ErrorKind::Parameter,
          "Gamma shape must be positive");
  LogNormalMoments m;
  m.var = std::log1p(1.0 / shape);
  m.mean = std::log(shape) - 0.5 * m.var;
  return m;
}

LatentTargets labels_to_latent(const Vector& labels, double alpha_eps) {
  require(alpha_eps > 0.0 && std::isfinite(alpha_eps), ErrorKind::Parameter,
          "alpha_eps must be positive");
  const Index n = labels.size();
  LatentTargets t;
  t.alpha_eps = alpha_eps;
  t.mean_a.resize(n);
  t.mean_b.resize(n);
  t.var_a.resize(n);
  t.var_b.resize(n);
  const LogNormalMoments big = gamma_to_lognormal(1.0 + alpha_eps);
  const LogNormalMoments small = gamma_to_lognormal(alpha_eps);
  for (Index i = 0; i < n; ++i) {
    require(labels[i] == 0.0 || labels[i] == 1.0, ErrorKind::Parameter,
            "class labels must be 0 or 1 (row " + std::to_string(i) + ")");
    const bool one = labels[i] == 1.0;
    const LogNormalMoments& a = one ? big : small;
    const LogNormalMoments& b = one ? small : big;
    t.mean_a[i] = a.mean;
    t.var_a[i] = a.var;
    t.mean_b[i] = b.mean;
    t.var_b[i] = b.var;
  }
  return t;
}

Dataset latent_dataset(const Matrix& inputs, const LatentTargets& targets, bool channel_a) {
  require(inputs.rows() == targets.size(), ErrorKind::Shape,
          "latent targets do not match the number of inputs");
  Dataset d;
  d.inputs = inputs;
  d.labels = channel_a ? targets.mean_a : targets.mean_b;
  d.noise_var = channel_a ? targets.var_a : targets.var_b;
  return d;
}

double latent_to_prob(double f_a, double f_b) {
  // the minority probability is computed directly and the other side as its
  // complement, so swapping the arguments gives p and 1 - p summing to 1
  const double e = std::exp(-std::abs(f_a - f_b));
  const double minor = e / (1.0 + e);
  return f_a >= f_b ? 1.0 - minor : minor;
}

Vector latent_to_prob(const Vector& f_a, const Vector& f_b) {
  require(f_a.size() == f_b.size(), ErrorKind::Shape, "latent predictions disagree in length");
  Vector p(f_a.size());
  for (Index i = 0; i < p.size(); ++i) p[i] = latent_to_prob(f_a[i], f_b[i]);
  return p;
}

Matrix latent_to_prob(const Matrix& f_a, const Matrix& f_b) {
  require(f_a.rows() == f_b.rows() && f_a.cols() == f_b.cols(), ErrorKind::Shape,
          "latent predictions disagree in shape");
  Matrix p(f_a.rows(), f_a.cols());
  for (Index i = 0; i < p.rows(); ++i)
    for (Index j = 0; j < p.cols(); ++j) p(i, j) = latent_to_prob(f_a(i, j), f_b(i, j));
  return p;
}

Vector ensemble_class_prob(const RegressionModel& model_a, std::span<const Vector> particles_a,
                           const RegressionModel& model_b, std::span<const Vector> particles_b,
                           const Matrix& inputs) {
  require(!particles_a.empty() && particles_a.size() == particles_b.size(), ErrorKind::Shape,
          "latent ensembles must be non-empty and of equal size");
  const Matrix fa = predict_particles(model_a, particles_a, inputs);
  const Matrix fb = predict_particles(model_b, particles_b, inputs);
  return latent_to_prob(fa, fb).colwise().mean().transpose();
}

}  // namespace pbens
