#include "pbens/nnet.hpp"

#include <cmath>
#include <numbers>

#include "pbens/error.hpp"

namespace pbens {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

double relu(double z) { return z > 0.0 ? z : 0.0; }
double relu_prime(double z) { return z > 0.0 ? 1.0 : 0.0; }
// ReLU is piecewise linear: its second derivative is zero wherever it exists.
constexpr double kReluSecond = 0.0;

Vector trig_row(const TrigFeatureMap& map, double x) {
  constexpr double kQuarterPi = std::numbers::pi / 4.0;
  return (map.omega.array() * x - kQuarterPi).cos().matrix();
}

// Forward pass over a batch; keeps pre-activations for the backward pass.
struct MlpPass {
  std::vector<Matrix> pre;  // pre[l]: width_{l+1} x n
  std::vector<Matrix> act;  // act[0] = X^T, act[l+1] = relu(pre[l]) (last is linear)
};

using ConstMap = Eigen::Map<const Matrix>;
using MutMap = Eigen::Map<Matrix>;

MlpPass mlp_forward(const ReluMlpArch& arch, const ParamLayout& layout, const Vector& theta,
                    const Matrix& inputs) {
  const std::size_t layers = arch.widths.size() - 1;
  MlpPass pass;
  pass.pre.reserve(layers);
  pass.act.reserve(layers + 1);
  pass.act.push_back(inputs.transpose());
  for (std::size_t l = 0; l < layers; ++l) {
    const auto& wb = layout.blocks()[2 * l];
    ConstMap w(theta.data() + layout.offset(2 * l), wb.rows, wb.cols);
    ConstMap b(theta.data() + layout.offset(2 * l + 1), wb.rows, 1);
    Matrix z = w * pass.act.back();
    z.colwise() += b.col(0);
    pass.pre.push_back(z);
    if (l + 1 < layers) {
      pass.act.push_back(z.unaryExpr([](double v) { return relu(v); }));
    } else {
      pass.act.push_back(std::move(z));
    }
  }
  return pass;
}

Vector mlp_pullback(const ReluMlpArch& arch, const ParamLayout& layout, const Vector& theta,
                    const MlpPass& pass, const Vector& weights) {
  const std::size_t layers = arch.widths.size() - 1;
  Vector grad = Vector::Zero(layout.size());
  Matrix delta = weights.transpose();  // d f_total / d pre[L-1], 1 x n
  for (std::size_t l = layers; l-- > 0;) {
    const auto& wb = layout.blocks()[2 * l];
    MutMap gw(grad.data() + layout.offset(2 * l), wb.rows, wb.cols);
    MutMap gb(grad.data() + layout.offset(2 * l + 1), wb.rows, 1);
    gw.noalias() = delta * pass.act[l].transpose();
    gb.col(0) = delta.rowwise().sum();
    if (l == 0) break;
    ConstMap w(theta.data() + layout.offset(2 * l), wb.rows, wb.cols);
    Matrix back = w.transpose() * delta;
    delta = back.cwiseProduct(pass.pre[l - 1].unaryExpr([](double v) { return relu_prime(v); }));
  }
  return grad;
}

// Exact diag(d^2 f / d theta_j^2) at one point by propagating the Hessian of f
// with respect to each layer's pre-activations:
//   Hz_L = 0 (linear output),
//   Hz_l = D' W^T Hz_{l+1} W D' + diag(sigma''(z_l) * W^T g_{l+1}),
// and a weight W_l[a][b] only enters through z_l[a], so its diagonal entry is
// Hz_l[a][a] * h_{l-1}[b]^2 (biases: Hz_l[a][a]).
Vector mlp_hessian_diag(const ReluMlpArch& arch, const ParamLayout& layout, const Vector& theta,
                        const Vector& x) {
  const std::size_t layers = arch.widths.size() - 1;
  const MlpPass pass = mlp_forward(arch, layout, theta, x.transpose());
  Vector diag = Vector::Zero(layout.size());
  Vector g = Vector::Ones(1);
  Matrix hz = Matrix::Zero(1, 1);
  for (std::size_t l = layers; l-- > 0;) {
    const auto& wb = layout.blocks()[2 * l];
    const Vector h_prev = pass.act[l].col(0);
    MutMap dw(diag.data() + layout.offset(2 * l), wb.rows, wb.cols);
    MutMap db(diag.data() + layout.offset(2 * l + 1), wb.rows, 1);
    const Vector hz_diag = hz.diagonal();
    dw.noalias() = hz_diag * h_prev.cwiseProduct(h_prev).transpose();
    db.col(0) = hz_diag;
    if (l == 0) break;
    ConstMap w(theta.data() + layout.offset(2 * l), wb.rows, wb.cols);
    const Vector z = pass.pre[l - 1].col(0);
    const Vector dfdh = w.transpose() * g;
    const Vector d1 = z.unaryExpr([](double v) { return relu_prime(v); });
    const Vector d2 = z.unaryExpr([](double) { return kReluSecond; });
    const Matrix hh = w.transpose() * hz * w;
    hz = d1.asDiagonal() * hh * d1.asDiagonal();
    hz.diagonal() += d2.cwiseProduct(dfdh);
    g = d1.cwiseProduct(dfdh);
  }
  return diag;
}

ParamLayout mlp_layout(const std::vector<Index>& widths) {
  std::vector<ParamBlock> blocks;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    blocks.push_back({widths[l + 1], widths[l], false});
    blocks.push_back({widths[l + 1], 1, true});
  }
  return ParamLayout(std::move(blocks));
}

}  // namespace

ParamLayout::ParamLayout(std::vector<ParamBlock> blocks) : blocks_(std::move(blocks)) {
  offsets_.reserve(blocks_.size());
  for (const auto& b : blocks_) {
    offsets_.push_back(size_);
    size_ += b.size();
  }
}

std::vector<Matrix> ParamLayout::unflatten(const Vector& theta) const {
  require(theta.size() == size_, ErrorKind::Shape,
          "parameter vector has length " + std::to_string(theta.size()) + ", layout expects " +
              std::to_string(size_));
  std::vector<Matrix> out;
  out.reserve(blocks_.size());
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    out.emplace_back(ConstMap(theta.data() + offsets_[i], blocks_[i].rows, blocks_[i].cols));
  }
  return out;
}

Vector ParamLayout::flatten(const std::vector<Matrix>& blocks) const {
  require(blocks.size() == blocks_.size(), ErrorKind::Shape, "wrong number of parameter blocks");
  Vector theta(size_);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    require(blocks[i].rows() == blocks_[i].rows && blocks[i].cols() == blocks_[i].cols,
            ErrorKind::Shape, "parameter block " + std::to_string(i) + " has the wrong shape");
    MutMap(theta.data() + offsets_[i], blocks_[i].rows, blocks_[i].cols) = blocks[i];
  }
  return theta;
}

Eigen::Array<bool, Eigen::Dynamic, 1> ParamLayout::bias_mask() const {
  Eigen::Array<bool, Eigen::Dynamic, 1> mask(size_);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    mask.segment(offsets_[i], blocks_[i].size()).setConstant(blocks_[i].bias);
  }
  return mask;
}

TrigFeatureMap TrigFeatureMap::sample(Index num_features, double lengthscale, Rng& rng) {
  require(num_features >= 1, ErrorKind::Parameter, "need at least one trigonometric feature");
  require(lengthscale > 0.0, ErrorKind::Parameter, "lengthscale must be positive");
  return {rng.normal_vector(num_features, lengthscale), lengthscale};
}

RegressionModel RegressionModel::linear(TrigFeatureMap features) {
  require(features.size() >= 1, ErrorKind::Parameter, "linear model needs at least one feature");
  const Index d = features.size();
  return RegressionModel(LinearArch{std::move(features)}, ParamLayout({{d, 1, false}}));
}

RegressionModel RegressionModel::relu_mlp(std::vector<Index> widths) {
  require(widths.size() >= 2, ErrorKind::Parameter, "MLP needs input and output widths");
  require(widths.back() == 1, ErrorKind::Parameter, "MLP output dimension must be 1");
  for (Index w : widths) require(w >= 1, ErrorKind::Parameter, "MLP widths must be positive");
  ParamLayout layout = mlp_layout(widths);
  return RegressionModel(ReluMlpArch{std::move(widths)}, std::move(layout));
}

RegressionModel RegressionModel::toy_relu() {
  return RegressionModel(ToyReluArch{}, ParamLayout({{2, 1, false}}));
}

RegressionModel RegressionModel::toy_square() {
  return RegressionModel(ToySquareArch{}, ParamLayout({{1, 1, false}}));
}

Index RegressionModel::input_dim() const {
  return std::visit(Overloaded{[](const ReluMlpArch& a) { return a.widths.front(); },
                               [](const auto&) { return Index{1}; }},
                    arch_);
}

std::string RegressionModel::name() const {
  return std::visit(
      Overloaded{
          [](const LinearArch& a) { return "linear_trig(D=" + std::to_string(a.features.size()) + ")"; },
          [](const ReluMlpArch& a) {
            std::string s = "relu_mlp(";
            for (std::size_t i = 0; i < a.widths.size(); ++i) {
              s += (i ? "-" : "") + std::to_string(a.widths[i]);
            }
            return s + ")";
          },
          [](const ToyReluArch&) { return std::string("toy_relu"); },
          [](const ToySquareArch&) { return std::string("toy_square"); }},
      arch_);
}

bool RegressionModel::zero_diagonal_curvature() const {
  return !std::holds_alternative<ToySquareArch>(arch_);
}

void RegressionModel::check(const Vector& theta, Index input_cols) const {
  require(theta.size() == num_params(), ErrorKind::Shape,
          name() + ": parameter vector has length " + std::to_string(theta.size()) +
              ", expected " + std::to_string(num_params()));
  require(input_cols == input_dim(), ErrorKind::Shape,
          name() + ": input has dimension " + std::to_string(input_cols) + ", expected " +
              std::to_string(input_dim()));
}

double RegressionModel::forward(const Vector& theta, const Vector& x) const {
  check(theta, x.size());
  return std::visit(
      Overloaded{[&](const LinearArch& a) { return theta.dot(trig_row(a.features, x[0])); },
                 [&](const ReluMlpArch& a) {
                   return mlp_forward(a, layout_, theta, x.transpose()).act.back()(0, 0);
                 },
                 [&](const ToyReluArch&) { return relu(theta[0] * x[0]) + relu(theta[1] * x[0]); },
                 [&](const ToySquareArch&) { return theta[0] * theta[0] * x[0]; }},
      arch_);
}

Vector RegressionModel::grad(const Vector& theta, const Vector& x) const {
  check(theta, x.size());
  return std::visit(
      Overloaded{[&](const LinearArch& a) { return trig_row(a.features, x[0]); },
                 [&](const ReluMlpArch& a) {
                   const Matrix in = x.transpose();
                   return mlp_pullback(a, layout_, theta, mlp_forward(a, layout_, theta, in),
                                       Vector::Ones(1));
                 },
                 [&](const ToyReluArch&) {
                   Vector g(2);
                   g << x[0] * relu_prime(theta[0] * x[0]), x[0] * relu_prime(theta[1] * x[0]);
                   return g;
                 },
                 [&](const ToySquareArch&) {
                   Vector g(1);
                   g << 2.0 * theta[0] * x[0];
                   return g;
                 }},
      arch_);
}

Vector RegressionModel::hessian_diag(const Vector& theta, const Vector& x) const {
  check(theta, x.size());
  return std::visit(
      Overloaded{[&](const LinearArch&) { return Vector(Vector::Zero(num_params())); },
                 [&](const ReluMlpArch& a) { return mlp_hessian_diag(a, layout_, theta, x); },
                 [&](const ToyReluArch&) {
                   // d^2/dw^2 ReLU(w x) = ReLU''(w x) x^2
                   Vector h(2);
                   h << kReluSecond * x[0] * x[0], kReluSecond * x[0] * x[0];
                   return h;
                 },
                 [&](const ToySquareArch&) {
                   Vector h(1);
                   h << 2.0 * x[0];
                   return h;
                 }},
      arch_);
}

PreparedInputs RegressionModel::prepare(const Matrix& inputs) const {
  PreparedInputs batch{inputs, {}};
  if (const auto* lin = std::get_if<LinearArch>(&arch_)) {
    require(inputs.cols() == 1, ErrorKind::Shape, name() + ": inputs must be one-dimensional");
    batch.features.resize(inputs.rows(), lin->features.size());
    for (Index i = 0; i < inputs.rows(); ++i) {
      batch.features.row(i) = trig_row(lin->features, inputs(i, 0)).transpose();
    }
  }
  return batch;
}

Vector RegressionModel::predict(const Vector& theta, const Matrix& inputs) const {
  return predict(theta, prepare(inputs));
}

Vector RegressionModel::predict(const Vector& theta, const PreparedInputs& batch) const {
  const Matrix& inputs = batch.inputs;
  check(theta, inputs.cols());
  return std::visit(
      Overloaded{[&](const LinearArch&) { return Vector(batch.features * theta); },
                 [&](const ReluMlpArch& a) {
                   return Vector(mlp_forward(a, layout_, theta, inputs).act.back().row(0).transpose());
                 },
                 [&](const ToyReluArch&) {
                   const auto x = inputs.col(0).array();
                   return Vector(((theta[0] * x).max(0.0) + (theta[1] * x).max(0.0)).matrix());
                 },
                 [&](const ToySquareArch&) {
                   return Vector(theta[0] * theta[0] * inputs.col(0));
                 }},
      arch_);
}

Vector RegressionModel::pullback(const Vector& theta, const Matrix& inputs,
                                  const Vector& weights) const {
  return pullback(theta, prepare(inputs), weights);
}

Vector RegressionModel::pullback(const Vector& theta, const PreparedInputs& batch,
                                  const Vector& weights) const {
  const Matrix& inputs = batch.inputs;
  check(theta, inputs.cols());
  require(weights.size() == inputs.rows(), ErrorKind::Shape, "pullback weights length mismatch");
  return std::visit(
      Overloaded{[&](const LinearArch&) { return Vector(batch.features.transpose() * weights); },
                 [&](const ReluMlpArch& a) {
                   return mlp_pullback(a, layout_, theta, mlp_forward(a, layout_, theta, inputs),
                                       weights);
                 },
                 [&](const ToyReluArch&) {
                   Vector g = Vector::Zero(2);
                   for (Index i = 0; i < inputs.rows(); ++i) {
                     const double x = inputs(i, 0);
                     g[0] += weights[i] * x * relu_prime(theta[0] * x);
                     g[1] += weights[i] * x * relu_prime(theta[1] * x);
                   }
                   return g;
                 },
                 [&](const ToySquareArch&) {
                   Vector g(1);
                   g << 2.0 * theta[0] * weights.dot(inputs.col(0));
                   return g;
                 }},
      arch_);
}

Matrix RegressionModel::jacobian(const Vector& theta, const Matrix& inputs) const {
  check(theta, inputs.cols());
  Matrix jac(inputs.rows(), num_params());
  for (Index i = 0; i < inputs.rows(); ++i) {
    jac.row(i) = grad(theta, inputs.row(i).transpose()).transpose();
  }
  return jac;
}

Vector init_from_prior(const RegressionModel& model, double alpha_w, double alpha_b, Rng& rng) {
  require(alpha_w > 0.0 && alpha_b > 0.0, ErrorKind::Parameter,
          "prior standard deviations must be positive");
  const auto mask = model.layout().bias_mask();
  Vector theta(model.num_params());
  for (Index j = 0; j < theta.size(); ++j) theta[j] = rng.normal() * (mask[j] ? alpha_b : alpha_w);
  return theta;
}

}  // namespace pbens
