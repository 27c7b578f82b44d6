#include "pbens/bayes.hpp"

#include <cmath>
#include <numbers>

#include "pbens/error.hpp"

namespace pbens {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void check_shapes(const GaussianBayesModel& bm, const Dataset& data, const Vector& theta) {
  data.validate();
  bm.model.check(theta, data.size() == 0 ? bm.model.input_dim() : data.input_dim());
}

void check_draw(const GaussianBayesModel& bm, const Dataset& data, const PerturbationDraw& draw) {
  require(draw.label_noise.size() == data.size(), ErrorKind::Shape,
          "perturbation label noise length does not match dataset size");
  require(draw.anchor.size() == bm.model.num_params(), ErrorKind::Shape,
          "perturbation anchor length does not match parameter count");
}

}  // namespace

void GaussianBayesModel::validate() const {
  require(sigma2 > 0.0, ErrorKind::Parameter, "likelihood variance sigma2 must be positive");
  require(alpha2_w > 0.0 && alpha2_b > 0.0, ErrorKind::Parameter,
          "prior variances must be positive");
}

Vector GaussianBayesModel::prior_variances() const {
  const auto mask = model.layout().bias_mask();
  return mask.select(Vector::Constant(mask.size(), alpha2_b), Vector::Constant(mask.size(), alpha2_w));
}

Vector GaussianBayesModel::noise_variances(const Dataset& data) const {
  if (data.heteroscedastic()) {
    require((data.noise_var.array() > 0.0).all(), ErrorKind::Parameter,
            "per-point noise variances must be positive");
    return data.noise_var;
  }
  return Vector::Constant(data.size(), sigma2);
}

PerturbationDraw PerturbationDraw::zero(Index n, Index m) {
  return {Vector::Zero(n), Vector::Zero(m)};
}

PerturbationDraw perturb(const GaussianBayesModel& bm, const Dataset& data, Rng& rng) {
  bm.validate();
  const Vector noise_sd = bm.noise_variances(data).cwiseSqrt();
  const Vector prior_sd = bm.prior_variances().cwiseSqrt();
  PerturbationDraw draw;
  draw.label_noise.resize(data.size());
  for (Index i = 0; i < data.size(); ++i) draw.label_noise[i] = noise_sd[i] * rng.normal();
  draw.anchor.resize(prior_sd.size());
  for (Index j = 0; j < prior_sd.size(); ++j) draw.anchor[j] = prior_sd[j] * rng.normal();
  return draw;
}

JointObjective::JointObjective(const GaussianBayesModel& bm, const Dataset& data)
    : bm_(&bm), data_(&data) {
  bm.validate();
  data.validate();
  if (data.size() > 0) {
    require(data.input_dim() == bm.model.input_dim(), ErrorKind::Shape,
            bm.model.name() + ": dataset inputs have dimension " +
                std::to_string(data.input_dim()) + ", expected " +
                std::to_string(bm.model.input_dim()));
    batch_ = bm.model.prepare(data.inputs);
  }
  noise_var_ = bm.noise_variances(data);
  prior_var_ = bm.prior_variances();
  log_normalizer_ = -0.5 * (kLog2Pi + noise_var_.array().log()).sum() -
                    0.5 * (kLog2Pi + prior_var_.array().log()).sum();
}

void JointObjective::check(const Vector& theta, const PerturbationDraw& draw) const {
  require(theta.size() == bm_->model.num_params(), ErrorKind::Shape,
          bm_->model.name() + ": parameter vector has length " + std::to_string(theta.size()) +
              ", expected " + std::to_string(bm_->model.num_params()));
  check_draw(*bm_, *data_, draw);
}

double JointObjective::value(const Vector& theta, const PerturbationDraw& draw) const {
  check(theta, draw);
  double quad = ((theta - draw.anchor).array().square() / prior_var_.array()).sum();
  if (data_->size() > 0) {
    const Vector residual = bm_->model.predict(theta, batch_) - (data_->labels + draw.label_noise);
    quad += (residual.array().square() / noise_var_.array()).sum();
  }
  return log_normalizer_ - 0.5 * quad;
}

Vector JointObjective::gradient(const Vector& theta, const PerturbationDraw& draw) const {
  Vector g;
  value_and_gradient(theta, draw, g);
  return g;
}

double JointObjective::value_and_gradient(const Vector& theta, const PerturbationDraw& draw,
                                          Vector& grad) const {
  check(theta, draw);
  const Vector prior_dev = theta - draw.anchor;
  double quad = (prior_dev.array().square() / prior_var_.array()).sum();
  grad = -(prior_dev.array() / prior_var_.array()).matrix();
  if (data_->size() > 0) {
    const Vector residual = (data_->labels + draw.label_noise) - bm_->model.predict(theta, batch_);
    quad += (residual.array().square() / noise_var_.array()).sum();
    grad += bm_->model.pullback(theta, batch_, (residual.array() / noise_var_.array()).matrix());
  }
  return log_normalizer_ - 0.5 * quad;
}

double log_joint(const GaussianBayesModel& bm, const Dataset& data, const Vector& theta) {
  return log_joint_perturbed(bm, data, PerturbationDraw::zero(data.size(), theta.size()), theta);
}

double log_joint_perturbed(const GaussianBayesModel& bm, const Dataset& data,
                           const PerturbationDraw& draw, const Vector& theta) {
  return JointObjective(bm, data).value(theta, draw);
}

Vector grad_log_joint(const GaussianBayesModel& bm, const Dataset& data, const Vector& theta) {
  return grad_log_joint_perturbed(bm, data, PerturbationDraw::zero(data.size(), theta.size()),
                                  theta);
}

Vector grad_log_joint_perturbed(const GaussianBayesModel& bm, const Dataset& data,
                                const PerturbationDraw& draw, const Vector& theta) {
  return JointObjective(bm, data).gradient(theta, draw);
}

Vector curvature_sums(const RegressionModel& model, const Vector& theta, const Matrix& inputs) {
  Vector sums(inputs.rows());
  for (Index i = 0; i < inputs.rows(); ++i) {
    sums[i] = model.hessian_diag(theta, inputs.row(i).transpose()).sum();
  }
  return sums;
}

double hessian_trace_log_joint(const GaussianBayesModel& bm, const Dataset& data,
                               const Vector& theta) {
  return hessian_trace_log_joint_perturbed(
      bm, data, PerturbationDraw::zero(data.size(), theta.size()), theta);
}

double hessian_trace_log_joint_perturbed(const GaussianBayesModel& bm, const Dataset& data,
                                         const PerturbationDraw& draw, const Vector& theta) {
  bm.validate();
  check_shapes(bm, data, theta);
  check_draw(bm, data, draw);
  double trace = -bm.prior_variances().cwiseInverse().sum();
  if (data.size() == 0) return trace;

  const Vector noise_var = bm.noise_variances(data);
  const Matrix jac = bm.model.jacobian(theta, data.inputs);
  trace -= (jac.rowwise().squaredNorm().array() / noise_var.array()).sum();

  // Curvature term; identically zero for linear and piecewise-linear models.
  const Vector curv = curvature_sums(bm.model, theta, data.inputs);
  const Vector residual = bm.model.predict(theta, data.inputs) - data.labels;
  trace -= ((residual - draw.label_noise).array() / noise_var.array() * curv.array()).sum();
  return trace;
}

Matrix predict_particles(const RegressionModel& model, std::span<const Vector> particles,
                         const Matrix& inputs) {
  Matrix out(static_cast<Index>(particles.size()), inputs.rows());
  for (std::size_t p = 0; p < particles.size(); ++p) {
    out.row(static_cast<Index>(p)) = model.predict(particles[p], inputs).transpose();
  }
  return out;
}

double mixture_mnll(const Matrix& predictions, const Vector& labels, double sigma2) {
  require(predictions.rows() >= 1, ErrorKind::Parameter, "MNLL needs at least one particle");
  require(predictions.cols() == labels.size(), ErrorKind::Shape,
          "prediction columns do not match label count");
  require(sigma2 > 0.0, ErrorKind::Parameter, "sigma2 must be positive");
  if (labels.size() == 0) return 0.0;
  const double k = static_cast<double>(predictions.rows());
  double total = 0.0;
  for (Index i = 0; i < labels.size(); ++i) {
    const Eigen::ArrayXd logs =
        -0.5 * (predictions.col(i).array() - labels[i]).square() / sigma2;
    const double mx = logs.maxCoeff();
    const double lse = mx + std::log((logs - mx).exp().sum());
    total += lse - std::log(k) - 0.5 * (kLog2Pi + std::log(sigma2));
  }
  return -total / static_cast<double>(labels.size());
}

double mean_prediction_rmse(const Matrix& predictions, const Vector& labels) {
  require(predictions.rows() >= 1, ErrorKind::Parameter, "RMSE needs at least one particle");
  require(predictions.cols() == labels.size(), ErrorKind::Shape,
          "prediction columns do not match label count");
  if (labels.size() == 0) return 0.0;
  const Vector mean = predictions.colwise().mean().transpose();
  return std::sqrt((mean - labels).squaredNorm() / static_cast<double>(labels.size()));
}

double predictive_mnll(const GaussianBayesModel& bm, std::span<const Vector> particles,
                       const Dataset& testset) {
  require(!particles.empty(), ErrorKind::Parameter, "MNLL needs at least one particle");
  return mixture_mnll(predict_particles(bm.model, particles, testset.inputs), testset.labels,
                      bm.sigma2);
}

double rmse(const RegressionModel& model, std::span<const Vector> particles,
            const Dataset& testset) {
  require(!particles.empty(), ErrorKind::Parameter, "RMSE needs at least one particle");
  return mean_prediction_rmse(predict_particles(model, particles, testset.inputs),
                              testset.labels);
}

}  // namespace pbens
