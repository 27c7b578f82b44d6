#include "pbens/linear_exact.hpp"

#include <cmath>
#include <numbers>

#include "pbens/error.hpp"

namespace pbens {

namespace {

Eigen::LLT<Matrix> spd_factor(const Matrix& m, const char* what) {
  require(m.rows() == m.cols(), ErrorKind::Shape, std::string(what) + " is not square");
  Eigen::LLT<Matrix> llt(m);
  require(llt.info() == Eigen::Success, ErrorKind::Numeric,
          std::string(what) + " is not symmetric positive definite");
  return llt;
}

double log_det(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

Matrix precision_matrix(const Matrix& design, double sigma2, double alpha2) {
  Matrix a = design * design.transpose() / sigma2;
  a.diagonal().array() += 1.0 / alpha2;
  return a;
}

void check_linear_inputs(const Matrix& design, const Vector& labels, double sigma2, double alpha2) {
  require(sigma2 > 0.0 && alpha2 > 0.0, ErrorKind::Parameter, "variances must be positive");
  require(design.cols() == labels.size(), ErrorKind::Shape,
          "design matrix columns do not match label count");
}

}  // namespace

Vector trig_features(double x, const Vector& omega) {
  return (omega.array() * x - std::numbers::pi / 4.0).cos().matrix();
}

Matrix design_matrix(const Vector& inputs, const Vector& omega) {
  Matrix phi(omega.size(), inputs.size());
  for (Index i = 0; i < inputs.size(); ++i) phi.col(i) = trig_features(inputs[i], omega);
  return phi;
}

GaussianPosterior posterior_exact(const Matrix& design, const Vector& labels, double sigma2,
                                  double alpha2) {
  check_linear_inputs(design, labels, sigma2, alpha2);
  GaussianPosterior post;
  post.precision = precision_matrix(design, sigma2, alpha2);
  const auto llt = spd_factor(post.precision, "posterior precision");
  post.log_det_precision = log_det(llt);
  post.mean = llt.solve(design * labels / sigma2);
  post.covariance = llt.solve(Matrix::Identity(design.rows(), design.rows()));
  post.covariance = 0.5 * (post.covariance + post.covariance.transpose()).eval();
  return post;
}

PerturbedMapSolver::PerturbedMapSolver(const Matrix& design, const Vector& labels, double sigma2,
                                       double alpha2)
    : design_(design), labels_(labels), sigma2_(sigma2), alpha2_(alpha2) {
  check_linear_inputs(design, labels, sigma2, alpha2);
  precision_llt_ = spd_factor(precision_matrix(design, sigma2, alpha2), "posterior precision");
}

Vector PerturbedMapSolver::solve(const Vector& label_noise, const Vector& anchor) const {
  require(label_noise.size() == labels_.size() && anchor.size() == design_.rows(),
          ErrorKind::Shape, "perturbation does not match the linear problem");
  const Vector rhs = design_ * (labels_ + label_noise) / sigma2_ + anchor / alpha2_;
  return precision_llt_.solve(rhs);
}

Vector PerturbedMapSolver::sample(Rng& rng) const {
  const Vector eps = rng.normal_vector(labels_.size(), std::sqrt(sigma2_));
  const Vector anchor = rng.normal_vector(design_.rows(), std::sqrt(alpha2_));
  return solve(eps, anchor);
}

Vector sample_w_star(const Matrix& design, const Vector& labels, double sigma2, double alpha2,
                     Rng& rng) {
  return PerturbedMapSolver(design, labels, sigma2, alpha2).sample(rng);
}

double kl_gaussians(const Vector& q_mean, const Matrix& q_cov, const Vector& p_mean,
                    const Matrix& p_cov) {
  const Index d = q_mean.size();
  require(p_mean.size() == d && q_cov.rows() == d && p_cov.rows() == d, ErrorKind::Shape,
          "Gaussian dimensions disagree");
  const auto p_llt = spd_factor(p_cov, "p covariance");
  const auto q_llt = spd_factor(q_cov, "q covariance");
  const double trace = p_llt.solve(q_cov).trace();
  const Vector diff = p_mean - q_mean;
  const double maha = diff.dot(p_llt.solve(diff));
  return 0.5 * (trace + maha - static_cast<double>(d) + log_det(p_llt) - log_det(q_llt));
}

double kl_to_posterior(const Vector& q_mean, const Matrix& q_cov,
                       const GaussianPosterior& posterior) {
  const Index d = q_mean.size();
  require(posterior.dim() == d && q_cov.rows() == d && q_cov.cols() == d, ErrorKind::Shape,
          "Gaussian dimensions disagree");
  const auto q_llt = spd_factor(q_cov, "q covariance");
  const double trace = posterior.precision.cwiseProduct(q_cov).sum();
  const Vector diff = posterior.mean - q_mean;
  const double maha = diff.dot(posterior.precision * diff);
  return 0.5 * (trace + maha - static_cast<double>(d) - posterior.log_det_precision -
                log_det(q_llt));
}

SampleMoments sample_moments(const Matrix& samples, double ridge) {
  require(samples.rows() >= 2, ErrorKind::Parameter, "need at least two samples for moments");
  SampleMoments m;
  m.mean = samples.colwise().mean().transpose();
  const Matrix centered = samples.rowwise() - m.mean.transpose();
  m.covariance = centered.transpose() * centered / static_cast<double>(samples.rows() - 1);
  m.covariance.diagonal().array() += ridge;
  return m;
}

SampleMoments sample_moments(std::span<const Vector> samples, double ridge) {
  return sample_moments(stack_rows(samples), ridge);
}

Matrix sample_gaussian(const GaussianPosterior& posterior, Index k, Rng& rng) {
  const auto llt = spd_factor(posterior.covariance, "posterior covariance");
  const Matrix l = llt.matrixL();
  Matrix z(posterior.dim(), k);
  for (Index c = 0; c < k; ++c) z.col(c) = rng.normal_vector(posterior.dim());
  Matrix out = (l * z).transpose();
  out.rowwise() += posterior.mean.transpose();
  return out;
}

double self_distance(const GaussianPosterior& posterior, Index k, int reps, std::uint64_t seed,
                     double ridge) {
  require(k >= 2 && reps >= 1, ErrorKind::Parameter, "self distance needs k >= 2 and reps >= 1");
  double total = 0.0;
  for (int r = 0; r < reps; ++r) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    const auto m = sample_moments(sample_gaussian(posterior, k, rng), ridge);
    total += kl_to_posterior(m.mean, m.covariance, posterior);
  }
  return total / reps;
}

}  // namespace pbens
