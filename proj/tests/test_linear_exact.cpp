#include <cmath>
#include <numbers>

#include "doctest.h"
#include "pbens/error.hpp"
#include "pbens/linear_exact.hpp"

using namespace pbens;

namespace {

const double kHalfSqrt2 = std::sqrt(2.0) / 2.0;

Matrix random_design(Index D, Index n, std::uint64_t seed) {
  Rng rng(seed);
  Vector x(n);
  for (Index i = 0; i < n; ++i) x[i] = rng.uniform(-3.0, 3.0);
  return design_matrix(x, rng.normal_vector(D, 1.6));
}

double normal_pdf(double x, double mean, double var) {
  return std::exp(-0.5 * (x - mean) * (x - mean) / var) / std::sqrt(2 * std::numbers::pi * var);
}

}  // namespace

TEST_CASE("trig_features examples") {
  const Vector omega = Vector::LinSpaced(5, -2.0, 3.0);
  CHECK((trig_features(0.0, omega).array() - kHalfSqrt2).abs().maxCoeff() < 1e-15);
  CHECK((trig_features(1.7, Vector::Zero(4)).array() - kHalfSqrt2).abs().maxCoeff() < 1e-15);
  const double w = 0.8;
  CHECK(trig_features(std::numbers::pi / (4 * w), Vector::Constant(1, w))[0] ==
        doctest::Approx(1.0));
}

TEST_CASE("design_matrix stacks features by column") {
  Vector x(3);
  x << -1.0, 0.2, 2.0;
  const Vector omega = Vector::LinSpaced(4, 0.1, 1.0);
  const Matrix phi = design_matrix(x, omega);
  REQUIRE(phi.rows() == 4);
  REQUIRE(phi.cols() == 3);
  for (Index i = 0; i < 3; ++i) CHECK((phi.col(i) - trig_features(x[i], omega)).norm() < 1e-15);
}

TEST_CASE("posterior with no data is the prior") {
  const auto post = posterior_exact(Matrix(3, 0), Vector(0), 0.1, 2.0);
  CHECK(post.mean.norm() == 0.0);
  CHECK((post.covariance - 2.0 * Matrix::Identity(3, 3)).norm() < 1e-14);
}

TEST_CASE("one-dimensional posterior by hand") {
  const auto post = posterior_exact(Matrix::Constant(1, 1, 1.0), Vector::Constant(1, 1.0), 1.0, 1.0);
  CHECK(post.precision(0, 0) == doctest::Approx(2.0));
  CHECK(post.mean[0] == doctest::Approx(0.5));
  CHECK(post.covariance(0, 0) == doctest::Approx(0.5));
  CHECK(post.log_det_precision == doctest::Approx(std::log(2.0)));
}

TEST_CASE("posterior invariants") {
  const Matrix phi = random_design(12, 30, 4);
  Rng rng(1);
  const auto post = posterior_exact(phi, rng.normal_vector(30), 0.1, 1.0);
  const Matrix id = Matrix::Identity(12, 12);
  CHECK((post.precision * post.covariance - id).norm() < 1e-8);
  CHECK((post.covariance - post.covariance.transpose()).norm() < 1e-10);
  Eigen::LLT<Matrix> llt(post.precision);
  CHECK(post.log_det_precision ==
        doctest::Approx(2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum()));
}

TEST_CASE("posterior mean agrees with a brute-force grid") {
  const Matrix phi = random_design(2, 5, 11);
  Rng rng(7);
  const Vector y = rng.normal_vector(5);
  const double s2 = 0.3, a2 = 1.0;
  const auto post = posterior_exact(phi, y, s2, a2);

  const int n = 801;
  const double lo = -6.0, hi = 6.0, dw = (hi - lo) / (n - 1);
  double z = 0.0, m0 = 0.0, m1 = 0.0, best = -INFINITY;
  std::vector<double> logp(static_cast<std::size_t>(n) * n);
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      Vector w(2);
      w << lo + a * dw, lo + b * dw;
      const double r = (y - phi.transpose() * w).squaredNorm();
      const double lp = -0.5 * r / s2 - 0.5 * w.squaredNorm() / a2;
      logp[static_cast<std::size_t>(a) * n + b] = lp;
      best = std::max(best, lp);
    }
  }
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      const double p = std::exp(logp[static_cast<std::size_t>(a) * n + b] - best);
      z += p;
      m0 += p * (lo + a * dw);
      m1 += p * (lo + b * dw);
    }
  }
  CHECK(std::abs(m0 / z - post.mean[0]) < 1e-3);
  CHECK(std::abs(m1 / z - post.mean[1]) < 1e-3);
}

TEST_CASE("large prior variance approaches least squares") {
  const Matrix phi = random_design(4, 40, 2);
  Rng rng(3);
  const Vector y = rng.normal_vector(40);
  const auto post = posterior_exact(phi, y, 0.5, 1e8);
  const Vector ols = (phi * phi.transpose()).ldlt().solve(phi * y);
  CHECK((post.mean - ols).norm() / ols.norm() < 1e-3);
}

TEST_CASE("invalid variances are rejected") {
  CHECK_THROWS_AS(posterior_exact(Matrix::Ones(1, 1), Vector::Ones(1), 0.0, 1.0), Error);
  CHECK_THROWS_AS(posterior_exact(Matrix::Ones(1, 1), Vector::Ones(1), 1.0, -1.0), Error);
  CHECK_THROWS_AS(posterior_exact(Matrix::Ones(2, 3), Vector::Ones(2), 1.0, 1.0), Error);
}

TEST_CASE("zero perturbation returns the posterior mean") {
  const Matrix phi = random_design(6, 20, 5);
  Rng rng(9);
  const Vector y = rng.normal_vector(20);
  const auto post = posterior_exact(phi, y, 0.1, 1.0);
  PerturbedMapSolver solver(phi, y, 0.1, 1.0);
  CHECK((solver.solve(Vector::Zero(20), Vector::Zero(6)) - post.mean).norm() < 1e-10);
}

TEST_CASE("perturbed MAP samples match the exact posterior") {
  const Matrix phi = random_design(5, 16, 8);
  Rng rng(10);
  const Vector y = rng.normal_vector(16);
  const auto post = posterior_exact(phi, y, 0.1, 1.0);
  const Index k = 10000;
  Matrix samples(k, 5);
  for (Index i = 0; i < k; ++i) samples.row(i) = sample_w_star(phi, y, 0.1, 1.0, rng).transpose();
  const auto mom = sample_moments(samples);
  CHECK((mom.covariance - post.covariance).norm() / post.covariance.norm() < 0.10);
  for (Index j = 0; j < 5; ++j) {
    CHECK(std::abs(mom.mean[j] - post.mean[j]) <
          3.0 * std::sqrt(post.covariance(j, j) / static_cast<double>(k)));
  }
}

TEST_CASE("sample_moments uses the unbiased denominator") {
  Matrix s(3, 1);
  s << 1.0, 2.0, 6.0;
  const auto m = sample_moments(s, 0.5);
  CHECK(m.mean[0] == doctest::Approx(3.0));
  CHECK(m.covariance(0, 0) == doctest::Approx(7.0 + 0.5));
}

TEST_CASE("kl_gaussians examples") {
  const Matrix one = Matrix::Identity(1, 1);
  CHECK(kl_gaussians(Vector::Zero(1), one, Vector::Ones(1), one) == doctest::Approx(0.5));

  Rng rng(2);
  Matrix b = Matrix::Random(4, 4);
  const Matrix cov = b * b.transpose() + Matrix::Identity(4, 4);
  const Vector mu = rng.normal_vector(4);
  CHECK(std::abs(kl_gaussians(mu, cov, mu, cov)) < 1e-12);

  for (double eps : {1e-5, 1e-3, 0.1}) {
    Vector shifted = mu;
    shifted[2] += eps;
    CHECK(kl_gaussians(shifted, cov, mu, cov) > 0.0);
  }
}

TEST_CASE("kl_gaussians matches 1-D quadrature") {
  const double mq = 0.3, vq = 0.7, mp = -0.4, vp = 1.9;
  const double lo = -20.0, hi = 20.0;
  const int n = 400001;
  const double dx = (hi - lo) / (n - 1);
  double kl = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = lo + i * dx;
    const double q = normal_pdf(x, mq, vq);
    const double w = (i == 0 || i == n - 1) ? 0.5 : 1.0;
    if (q > 0.0) kl += w * q * std::log(q / normal_pdf(x, mp, vp));
  }
  kl *= dx;
  const double closed = kl_gaussians(Vector::Constant(1, mq), Matrix::Constant(1, 1, vq),
                                     Vector::Constant(1, mp), Matrix::Constant(1, 1, vp));
  CHECK(std::abs(kl - closed) < 1e-6);
}

TEST_CASE("kl_gaussians rejects non-SPD covariance") {
  Matrix bad = Matrix::Identity(2, 2);
  bad(1, 1) = -1.0;
  CHECK_THROWS_AS(kl_gaussians(Vector::Zero(2), bad, Vector::Zero(2), Matrix::Identity(2, 2)),
                  Error);
  CHECK_THROWS_AS(kl_gaussians(Vector::Zero(2), Matrix::Identity(2, 2), Vector::Zero(2), bad),
                  Error);
}

TEST_CASE("kl_to_posterior agrees with kl_gaussians") {
  const Matrix phi = random_design(6, 10, 3);
  Rng rng(4);
  const auto post = posterior_exact(phi, rng.normal_vector(10), 0.2, 1.0);
  const Matrix samples = sample_gaussian(post, 50, rng);
  const auto m = sample_moments(samples);
  CHECK(kl_to_posterior(m.mean, m.covariance, post) ==
        doctest::Approx(kl_gaussians(m.mean, m.covariance, post.mean, post.covariance))
            .epsilon(1e-9));
}

TEST_CASE("self-distance") {
  const Matrix phi = random_design(2, 8, 6);
  Rng rng(5);
  const auto post = posterior_exact(phi, rng.normal_vector(8), 0.1, 1.0);
  CHECK(self_distance(post, 100000, 3, 1) < 1e-2);
  CHECK(self_distance(post, 20, 1, 42) == self_distance(post, 20, 1, 42));
  CHECK(self_distance(post, 20, 4, 42) > self_distance(post, 2000, 4, 42));
}

TEST_CASE("self-distance at the full linear configuration") {
  Rng rng(0);
  Vector x(64);
  for (Index i = 0; i < 64; ++i) x[i] = rng.uniform(-3.0, 3.0);
  const Matrix phi = design_matrix(x, rng.normal_vector(1024, 1.6));
  const auto post = posterior_exact(phi, rng.normal_vector(64), 0.1, 1.0);
  const double sd = self_distance(post, 200, 20, 3, 1e-6);
  CHECK(std::isfinite(sd));
  CHECK(sd > 0.0);
}
