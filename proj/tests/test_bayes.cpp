#include <cmath>
#include <numbers>

#include "doctest.h"
#include "pbens/bayes.hpp"
#include "pbens/error.hpp"
#include "test_util.hpp"

using namespace pbens;
using testutil::central_diff;
using testutil::rel_err;

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

Vector scalar(double x) { return Vector::Constant(1, x); }

Dataset one_point(double x, double y) {
  Dataset d;
  d.inputs = Matrix::Constant(1, 1, x);
  d.labels = Vector::Constant(1, y);
  return d;
}

Dataset noisy_data(Index n, Index dim, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  d.inputs.resize(n, dim);
  for (Index i = 0; i < n; ++i) d.inputs.row(i) = rng.normal_vector(dim).transpose();
  d.labels = rng.normal_vector(n);
  return d;
}

}  // namespace

TEST_CASE("log_joint with no data is the prior normalizer") {
  GaussianBayesModel bm{RegressionModel::relu_mlp({2, 3, 1}), 0.5, 2.0, 2.0};
  Dataset empty;
  empty.inputs.resize(0, 2);
  const Index m = bm.model.num_params();
  CHECK(log_joint(bm, empty, Vector::Zero(m)) ==
        doctest::Approx(-0.5 * m * std::log(2 * std::numbers::pi * 2.0)));
}

TEST_CASE("log_joint hand evaluation on ToySquare") {
  GaussianBayesModel bm{RegressionModel::toy_square(), 1.0, 1.0, 1.0};
  CHECK(log_joint(bm, one_point(1.0, 0.0), scalar(0.0)) == doctest::Approx(-kLog2Pi));
  // theta = 1: residual 1, prior term 1
  CHECK(log_joint(bm, one_point(1.0, 0.0), scalar(1.0)) == doctest::Approx(-kLog2Pi - 1.0));
}

TEST_CASE("log_joint matches a direct evaluation with separate weight and bias priors") {
  GaussianBayesModel bm{RegressionModel::relu_mlp({2, 4, 1}), 0.3, 1.5, 0.2};
  const Dataset d = noisy_data(6, 2, 3);
  Rng rng(9);
  const Vector theta = rng.normal_vector(bm.model.num_params());
  const auto mask = bm.model.layout().bias_mask();
  double expect = 0.0;
  for (Index i = 0; i < d.size(); ++i) {
    const double r = d.labels[i] - bm.model.forward(theta, d.inputs.row(i).transpose());
    expect += -0.5 * (kLog2Pi + std::log(0.3)) - 0.5 * r * r / 0.3;
  }
  for (Index j = 0; j < theta.size(); ++j) {
    const double a2 = mask[j] ? 0.2 : 1.5;
    expect += -0.5 * (kLog2Pi + std::log(a2)) - 0.5 * theta[j] * theta[j] / a2;
  }
  CHECK(log_joint(bm, d, theta) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("label shift is absorbed by the output bias") {
  GaussianBayesModel bm{RegressionModel::relu_mlp({1, 3, 1}), 0.4, 1.0, 1.0};
  const Dataset d = noisy_data(5, 1, 2);
  Rng rng(4);
  Vector theta = rng.normal_vector(bm.model.num_params());
  Dataset shifted = d;
  shifted.labels.array() += 2.5;
  Vector theta_shift = theta;
  theta_shift[theta.size() - 1] += 2.5;  // output bias
  const Vector r1 = d.labels - bm.model.predict(theta, d.inputs);
  const Vector r2 = shifted.labels - bm.model.predict(theta_shift, shifted.inputs);
  CHECK(rel_err(r1, r2) < 1e-12);
}

TEST_CASE("perturb: scale and moments") {
  GaussianBayesModel tiny{RegressionModel::toy_relu(), 1e-18, 1.0, 1.0};
  const Dataset d = noisy_data(10, 1, 1);
  Rng rng(3);
  CHECK(perturb(tiny, d, rng).label_noise.cwiseAbs().maxCoeff() < 1e-8);

  GaussianBayesModel bm{RegressionModel::toy_relu(), 0.7, 1.0, 1.0};
  const int n = 100000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double e = perturb(bm, one_point(0.5, 1.0), rng).label_noise[0];
    s += e;
    s2 += e * e;
  }
  const double mean = s / n;
  const double var = s2 / n - mean * mean;
  CHECK(std::abs(mean) < 3.0 * std::sqrt(0.7 / n));
  CHECK(std::abs(var - 0.7) < 0.05 * 0.7);
}

TEST_CASE("perturb uses per-point variances when present") {
  GaussianBayesModel bm{RegressionModel::toy_relu(), 1.0, 1.0, 1.0};
  Dataset d = noisy_data(2, 1, 5);
  d.noise_var = Vector(2);
  d.noise_var << 1e-20, 4.0;
  Rng rng(1);
  double s2 = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const auto draw = perturb(bm, d, rng);
    CHECK(std::abs(draw.label_noise[0]) < 1e-8);
    s2 += draw.label_noise[1] * draw.label_noise[1];
  }
  CHECK(s2 / 20000 == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("zero draw reproduces the unperturbed joint exactly") {
  GaussianBayesModel bm{RegressionModel::relu_mlp({2, 4, 1}), 0.3, 1.0, 0.5};
  const Dataset d = noisy_data(8, 2, 6);
  Rng rng(2);
  const Vector theta = rng.normal_vector(bm.model.num_params());
  const auto zero = PerturbationDraw::zero(d.size(), theta.size());
  CHECK(log_joint_perturbed(bm, d, zero, theta) == log_joint(bm, d, theta));
  CHECK((grad_log_joint_perturbed(bm, d, zero, theta).array() ==
         grad_log_joint(bm, d, theta).array())
            .all());
  CHECK(hessian_trace_log_joint_perturbed(bm, d, zero, theta) ==
        hessian_trace_log_joint(bm, d, theta));
}

TEST_CASE("perturbed likelihood hand evaluation on the toy relu model") {
  GaussianBayesModel bm{RegressionModel::toy_relu(), 0.05, 1.0, 1.0};
  // observed y = 0 with label noise 1 gives ỹ = 1; anchor 0, w = (0, 0)
  PerturbationDraw draw{Vector::Constant(1, 1.0), Vector::Zero(2)};
  const double value = log_joint_perturbed(bm, one_point(1.0, 0.0), draw, Vector::Zero(2));
  const double constants = -0.5 * (kLog2Pi + std::log(0.05)) - kLog2Pi;
  CHECK(value - constants == doctest::Approx(-10.0));
}

TEST_CASE("gradients match finite differences") {
  Rng rng(41);
  std::vector<GaussianBayesModel> models{
      {RegressionModel::toy_square(), 0.5, 1.0, 1.0},
      {RegressionModel::toy_relu(), 0.05, 1.0, 1.0},
      {RegressionModel::relu_mlp({2, 5, 1}), 0.2, 1.0, 0.7},
  };
  Rng frng(2);
  models.push_back({RegressionModel::linear(TrigFeatureMap::sample(6, 1.6, frng)), 0.1, 1.0, 1.0});
  for (const auto& bm : models) {
    const Index dim = bm.model.input_dim();
    const Dataset d = noisy_data(5, dim, 13);
    const Vector theta = rng.normal_vector(bm.model.num_params());
    const auto draw = perturb(bm, d, rng);
    auto f = [&](const Vector& t) { return log_joint_perturbed(bm, d, draw, t); };
    const Vector g = grad_log_joint_perturbed(bm, d, draw, theta);
    CHECK(rel_err(central_diff(f, theta), g) < 1e-5);
  }
}

TEST_CASE("hessian trace examples") {
  GaussianBayesModel sq{RegressionModel::toy_square(), 1.0, 1.0, 1.0};
  CHECK(hessian_trace_log_joint(sq, one_point(1.0, 0.0), scalar(1.0)) == doctest::Approx(-7.0));

  Rng frng(6);
  const auto fm = TrigFeatureMap::sample(10, 1.6, frng);
  GaussianBayesModel lin{RegressionModel::linear(fm), 0.1, 2.0, 2.0};
  const Dataset d = noisy_data(7, 1, 8);
  double phi_sq = 0.0;
  for (Index i = 0; i < d.size(); ++i) {
    for (Index k = 0; k < 10; ++k) {
      const double c = std::cos(fm.omega[k] * d.inputs(i, 0) - std::numbers::pi / 4);
      phi_sq += c * c;
    }
  }
  Rng rng(1);
  const Vector w = rng.normal_vector(10);
  CHECK(hessian_trace_log_joint(lin, d, w) == doctest::Approx(-phi_sq / 0.1 - 10 / 2.0));
  const auto draw = perturb(lin, d, rng);
  CHECK(hessian_trace_log_joint_perturbed(lin, d, draw, w) == hessian_trace_log_joint(lin, d, w));
}

TEST_CASE("hessian trace matches finite differences of the gradient") {
  GaussianBayesModel sq{RegressionModel::toy_square(), 0.4, 1.3, 1.3};
  const Dataset d = noisy_data(6, 1, 21);
  Rng rng(3);
  for (int rep = 0; rep < 5; ++rep) {
    const Vector theta = rng.normal_vector(1);
    const auto draw = perturb(sq, d, rng);
    const double h = 1e-5;
    const double fd = (grad_log_joint_perturbed(sq, d, draw, theta + scalar(h))[0] -
                       grad_log_joint_perturbed(sq, d, draw, theta - scalar(h))[0]) /
                      (2 * h);
    CHECK(hessian_trace_log_joint_perturbed(sq, d, draw, theta) ==
          doctest::Approx(fd).epsilon(1e-4));
  }
}

TEST_CASE("predictive MNLL examples") {
  GaussianBayesModel bm{RegressionModel::toy_square(), 1.0, 1.0, 1.0};
  Dataset d;
  d.inputs = Matrix(3, 1);
  d.inputs << 1.0, 2.0, -1.0;
  const Vector theta = scalar(1.5);
  d.labels = bm.model.predict(theta, d.inputs);
  std::vector<Vector> one{theta};
  CHECK(predictive_mnll(bm, one, d) == doctest::Approx(0.5 * kLog2Pi));
  std::vector<Vector> dup{theta, theta, theta};
  CHECK(predictive_mnll(bm, dup, d) == doctest::Approx(0.5 * kLog2Pi));

  Matrix preds(2, 4);
  const Vector y = Vector::LinSpaced(4, -1.0, 2.0);
  preds.row(0) = (y.array() + 1.0).matrix().transpose();
  preds.row(1) = (y.array() - 1.0).matrix().transpose();
  CHECK(mixture_mnll(preds, y, 1.0) == doctest::Approx(0.5 * kLog2Pi + 0.5));
}

TEST_CASE("MNLL stays finite far from every particle") {
  Matrix preds = Matrix::Zero(3, 1);
  const Vector y = Vector::Constant(1, 1e4);
  const double v = mixture_mnll(preds, y, 0.01);
  CHECK(std::isfinite(v));
  CHECK(v == doctest::Approx(0.5 * (kLog2Pi + std::log(0.01)) + 0.5 * 1e8 / 0.01));
}

TEST_CASE("rmse examples") {
  Matrix zero = Matrix::Zero(1, 2);
  Vector y(2);
  y << 3.0, 4.0;
  CHECK(mean_prediction_rmse(zero, y) == doctest::Approx(std::sqrt(12.5)));
  CHECK(mean_prediction_rmse(y.transpose(), y) == 0.0);

  Rng rng(5);
  Matrix preds(4, 30);
  for (Index i = 0; i < 4; ++i) preds.row(i) = rng.normal_vector(30).transpose();
  const Vector labels = rng.normal_vector(30);
  double ss = 0.0;
  for (Index j = 0; j < 30; ++j) {
    double m = 0.0;
    for (Index i = 0; i < 4; ++i) m += preds(i, j);
    m /= 4.0;
    ss += (m - labels[j]) * (m - labels[j]);
  }
  CHECK(mean_prediction_rmse(preds, labels) == doctest::Approx(std::sqrt(ss / 30)).epsilon(1e-12));
}

TEST_CASE("invalid variances are rejected") {
  GaussianBayesModel bm{RegressionModel::toy_relu(), 0.0, 1.0, 1.0};
  CHECK_THROWS_AS(bm.validate(), Error);
  bm.sigma2 = 1.0;
  bm.alpha2_b = -1.0;
  CHECK_THROWS_AS(bm.validate(), Error);
}

TEST_CASE("perturbed gradient and trace are unbiased") {
  GaussianBayesModel bm{RegressionModel::toy_square(), 0.3, 0.8, 0.8};
  const Dataset d = noisy_data(6, 1, 17);
  const Vector theta = scalar(0.7);
  const double g_true = grad_log_joint(bm, d, theta)[0];
  const double t_true = hessian_trace_log_joint(bm, d, theta);
  Rng rng(12);
  const int n = 20000;
  double gs = 0.0, gs2 = 0.0, ts = 0.0, ts2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto draw = perturb(bm, d, rng);
    const double g = grad_log_joint_perturbed(bm, d, draw, theta)[0];
    const double t = hessian_trace_log_joint_perturbed(bm, d, draw, theta);
    gs += g;
    gs2 += g * g;
    ts += t;
    ts2 += t * t;
  }
  const double g_mean = gs / n, t_mean = ts / n;
  const double g_se = std::sqrt((gs2 / n - g_mean * g_mean) / n);
  const double t_se = std::sqrt((ts2 / n - t_mean * t_mean) / n);
  CHECK(std::abs(g_mean - g_true) < 3.0 * g_se);
  CHECK(std::abs(t_mean - t_true) < 3.0 * t_se);
}
