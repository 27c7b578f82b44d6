#include <cmath>
#include <numbers>

#include "doctest.h"
#include "pbens/error.hpp"
#include "pbens/nnet.hpp"
#include "test_util.hpp"

using namespace pbens;
using testutil::central_diff;
using testutil::rel_err;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Vector scalar(double x) { return Vector::Constant(1, x); }

RegressionModel linear_model(Index D, std::uint64_t seed = 3) {
  Rng rng(seed);
  return RegressionModel::linear(TrigFeatureMap::sample(D, 1.6, rng));
}

}  // namespace

TEST_CASE("layout flatten/unflatten round trip is bit exact") {
  const auto model = RegressionModel::relu_mlp({3, 7, 5, 1});
  Rng rng(11);
  const Vector theta = rng.normal_vector(model.num_params());
  const auto blocks = model.layout().unflatten(theta);
  CHECK(blocks.size() == 6);
  const Vector back = model.layout().flatten(blocks);
  CHECK((back.array() == theta.array()).all());
  Index total = 0;
  for (const auto& b : model.layout().blocks()) total += b.size();
  CHECK(total == model.num_params());
  CHECK(model.num_params() == 3 * 7 + 7 + 7 * 5 + 5 + 5 * 1 + 1);
}

TEST_CASE("deep network parameter count") {
  std::vector<Index> widths{1};
  for (int i = 0; i < 8; ++i) widths.push_back(50);
  widths.push_back(1);
  const auto model = RegressionModel::relu_mlp(widths);
  // 1->50, seven 50->50 layers, 50->1, all with biases
  CHECK(model.num_params() == 100 + 7 * 2550 + 51);
}

TEST_CASE("relu_mlp must end in a scalar output") {
  CHECK_THROWS_AS(RegressionModel::relu_mlp({2, 4, 2}), Error);
  CHECK_THROWS_AS(RegressionModel::relu_mlp({2}), Error);
}

TEST_CASE("forward examples") {
  const auto sq = RegressionModel::toy_square();
  CHECK(sq.forward(scalar(2.0), scalar(3.0)) == doctest::Approx(12.0));
  const auto toy = RegressionModel::toy_relu();
  CHECK(toy.forward(vec({1.0, -1.0}), scalar(2.0)) == doctest::Approx(2.0));
  const auto lin = linear_model(16);
  for (double x : {-2.0, 0.0, 0.7, 5.0}) CHECK(lin.forward(Vector::Zero(16), scalar(x)) == 0.0);
}

TEST_CASE("linear model computes w^T cos(omega x - pi/4)") {
  Rng rng(5);
  const auto fm = TrigFeatureMap::sample(8, 1.6, rng);
  const auto lin = RegressionModel::linear(fm);
  const Vector w = rng.normal_vector(8);
  for (double x : {-1.3, 0.0, 2.2}) {
    double expect = 0.0;
    for (Index d = 0; d < 8; ++d) expect += w[d] * std::cos(fm.omega[d] * x - std::numbers::pi / 4);
    CHECK(lin.forward(w, scalar(x)) == doctest::Approx(expect).epsilon(1e-13));
  }
}

TEST_CASE("gradient examples") {
  const auto sq = RegressionModel::toy_square();
  CHECK(sq.grad(scalar(2.0), scalar(3.0))[0] == doctest::Approx(12.0));
  const auto toy = RegressionModel::toy_relu();
  const Vector g = toy.grad(vec({1.0, -1.0}), scalar(2.0));
  CHECK(g[0] == doctest::Approx(2.0));
  CHECK(g[1] == 0.0);
  auto f = [&](const Vector& t) { return toy.forward(t, scalar(2.0)); };
  CHECK(rel_err(central_diff(f, vec({1.0, -1.0})), g) < 1e-8);
}

TEST_CASE("relu derivative at zero is zero") {
  const auto toy = RegressionModel::toy_relu();
  const Vector g = toy.grad(vec({0.0, 0.0}), scalar(1.0));
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 0.0);
}

TEST_CASE("hessian diagonal examples") {
  const auto sq = RegressionModel::toy_square();
  CHECK(sq.hessian_diag(scalar(2.0), scalar(3.0))[0] == doctest::Approx(6.0));
  const auto toy = RegressionModel::toy_relu();
  const Vector h = toy.hessian_diag(vec({0.4, -1.2}), scalar(0.8));
  CHECK(h[0] == 0.0);
  CHECK(h[1] == 0.0);
  const auto lin = linear_model(12);
  Rng rng(2);
  const Vector hl = lin.hessian_diag(rng.normal_vector(12), scalar(0.3));
  CHECK((hl.array() == 0.0).all());
}

TEST_CASE("mlp forward matches an independent implementation") {
  const std::vector<Index> widths{3, 6, 4, 1};
  const auto model = RegressionModel::relu_mlp(widths);
  Rng rng(17);
  for (int rep = 0; rep < 20; ++rep) {
    const Vector theta = rng.normal_vector(model.num_params());
    const Vector x = rng.normal_vector(3);
    CHECK(model.forward(theta, x) ==
          doctest::Approx(testutil::mlp_reference(widths, theta, x)).epsilon(1e-12));
  }
}

TEST_CASE("batched predict, pullback and jacobian agree with single-point calls") {
  const auto model = RegressionModel::relu_mlp({2, 5, 3, 1});
  Rng rng(23);
  const Vector theta = rng.normal_vector(model.num_params());
  Matrix X(7, 2);
  for (Index i = 0; i < 7; ++i) X.row(i) = rng.normal_vector(2).transpose();
  const Vector w = rng.normal_vector(7);
  const Vector pred = model.predict(theta, X);
  const Matrix J = model.jacobian(theta, X);
  Vector pull = Vector::Zero(model.num_params());
  for (Index i = 0; i < 7; ++i) {
    const Vector x = X.row(i).transpose();
    CHECK(pred[i] == doctest::Approx(model.forward(theta, x)).epsilon(1e-13));
    CHECK(rel_err(J.row(i).transpose(), model.grad(theta, x)) < 1e-13);
    pull += w[i] * model.grad(theta, x);
  }
  CHECK(rel_err(model.pullback(theta, X, w), pull) < 1e-12);
  const auto prepared = model.prepare(X);
  CHECK(rel_err(model.predict(theta, prepared), pred) < 1e-14);
}

TEST_CASE("linear model prepared inputs agree with the direct path") {
  const auto lin = linear_model(32);
  Rng rng(4);
  const Vector w = rng.normal_vector(32);
  Matrix X(9, 1);
  for (Index i = 0; i < 9; ++i) X(i, 0) = rng.uniform(-3, 3);
  const Vector weights = rng.normal_vector(9);
  const auto prepared = lin.prepare(X);
  CHECK(rel_err(lin.predict(w, prepared), lin.predict(w, X)) < 1e-14);
  CHECK(rel_err(lin.pullback(w, prepared, weights), lin.pullback(w, X, weights)) < 1e-14);
}

TEST_CASE("shape errors") {
  const auto model = RegressionModel::relu_mlp({2, 3, 1});
  CHECK_THROWS_AS(model.forward(Vector::Zero(3), Vector::Zero(2)), Error);
  CHECK_THROWS_AS(model.forward(Vector::Zero(model.num_params()), Vector::Zero(3)), Error);
  try {
    model.predict(Vector::Zero(2), Matrix::Zero(4, 2));
    FAIL("expected a shape error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Shape);
  }
}

TEST_CASE("toy relu is positively homogeneous in its weights") {
  const auto toy = RegressionModel::toy_relu();
  Rng rng(8);
  for (int rep = 0; rep < 50; ++rep) {
    const Vector t = rng.normal_vector(2);
    const double x = rng.normal();
    const double c = rng.uniform(0.1, 5.0);
    CHECK(toy.forward(c * t, scalar(x)) == doctest::Approx(c * toy.forward(t, scalar(x))));
  }
}

TEST_CASE("mlp hessian diagonal is exactly zero and matches finite differences") {
  const std::vector<Index> widths{2, 6, 6, 1};
  const auto model = RegressionModel::relu_mlp(widths);
  Rng rng(31);
  int tested = 0;
  while (tested < 200) {
    const Vector theta = rng.normal_vector(model.num_params());
    const Vector x = rng.normal_vector(2);
    double closest = 0.0;
    testutil::mlp_reference(widths, theta, x, &closest);
    if (closest < 1e-3) continue;
    ++tested;
    const Vector h = model.hessian_diag(theta, x);
    CHECK((h.array() == 0.0).all());
    auto f = [&](const Vector& t) { return model.forward(t, x); };
    CHECK(testutil::second_diff_diag(f, theta).cwiseAbs().maxCoeff() < 1e-4);
  }
}

TEST_CASE("toy square hessian matches finite differences") {
  const auto sq = RegressionModel::toy_square();
  auto f = [&](const Vector& t) { return sq.forward(t, scalar(1.7)); };
  CHECK(testutil::second_diff_diag(f, scalar(0.9))[0] ==
        doctest::Approx(sq.hessian_diag(scalar(0.9), scalar(1.7))[0]).epsilon(1e-5));
}

TEST_CASE("init_from_prior") {
  const auto model = RegressionModel::relu_mlp({1, 4, 1});
  Rng a(99), b(99);
  const Vector t1 = init_from_prior(model, 1.0, 1.0, a);
  const Vector t2 = init_from_prior(model, 1.0, 1.0, b);
  CHECK((t1.array() == t2.array()).all());

  Rng tiny(1);
  CHECK(init_from_prior(model, 1e-12, 1e-12, tiny).cwiseAbs().maxCoeff() < 1e-10);

  Rng rng(7);
  const auto toy = RegressionModel::toy_relu();
  const int n = 100000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += init_from_prior(toy, 1.0, 1.0, rng)[0];
  CHECK(std::abs(sum / n) < 3.0 / std::sqrt(static_cast<double>(n)));

  // weights and biases follow their own scales
  Rng rng2(12);
  const auto mask = model.layout().bias_mask();
  const Vector t = init_from_prior(model, 1e-9, 1.0, rng2);
  for (Index j = 0; j < t.size(); ++j) {
    if (!mask[j]) CHECK(std::abs(t[j]) < 1e-7);
  }
}
