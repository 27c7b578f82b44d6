#include "pbens/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pbens/error.hpp"
#include "pbens/parallel.hpp"

namespace pbens {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kDensityFloor = 1e-300;

Vector ranks(const Vector& v) {
  const Index n = v.size();
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return v[a] < v[b]; });
  Vector r(n);
  for (Index i = 0; i < n;) {
    Index j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Index t = i; t <= j; ++t) r[order[t]] = avg;
    i = j + 1;
  }
  return r;
}

Vector trapezoid_axis(const Vector& axis) {
  const Index n = axis.size();
  const double h = (axis[n - 1] - axis[0]) / static_cast<double>(n - 1);
  Vector w = Vector::Constant(n, h);
  w[0] = w[n - 1] = 0.5 * h;
  return w;
}

}  // namespace

KdeDensity::KdeDensity(Matrix samples, Matrix bandwidth)
    : samples_(std::move(samples)), bandwidth_(std::move(bandwidth)) {
  const Index d = samples_.cols();
  require(d == 1 || d == 2, ErrorKind::Parameter, "KDE supports 1 or 2 dimensions");
  require(samples_.rows() >= 2, ErrorKind::Parameter, "KDE needs at least two samples");
  require(bandwidth_.rows() == d && bandwidth_.cols() == d, ErrorKind::Shape,
          "KDE bandwidth shape does not match sample dimension");
  require(samples_.allFinite(), ErrorKind::Numeric, "KDE samples contain non-finite values");
  Eigen::LLT<Matrix> llt(bandwidth_);
  require(llt.info() == Eigen::Success && bandwidth_.allFinite(), ErrorKind::Numeric,
          "KDE bandwidth is not positive definite (degenerate samples)");
  const Matrix L = llt.matrixL();
  require((L.diagonal().array() > 0.0).all(), ErrorKind::Numeric,
          "KDE bandwidth is not positive definite (degenerate samples)");
  chol_inv_ = L.triangularView<Eigen::Lower>().solve(Matrix::Identity(d, d));
  log_norm_ = -0.5 * static_cast<double>(d) * kLog2Pi - L.diagonal().array().log().sum() -
              std::log(static_cast<double>(samples_.rows()));
}

double KdeDensity::operator()(const Vector& z) const {
  require(z.size() == dim(), ErrorKind::Shape, "KDE query has the wrong dimension");
  const Matrix centered = (samples_.rowwise() - z.transpose()) * chol_inv_.transpose();
  const Eigen::ArrayXd q = centered.rowwise().squaredNorm().array();
  return std::exp(log_norm_) * (-0.5 * q).exp().sum();
}

Vector KdeDensity::evaluate(const Matrix& points, int threads) const {
  require(points.cols() == dim(), ErrorKind::Shape, "KDE query has the wrong dimension");
  Vector out(points.rows());
  const Matrix whitened = samples_ * chol_inv_.transpose();
  const Matrix query = points * chol_inv_.transpose();
  const double scale = std::exp(log_norm_);
  constexpr std::size_t kBlock = 256;
  const std::size_t blocks = (static_cast<std::size_t>(points.rows()) + kBlock - 1) / kBlock;
  parallel_for(blocks, threads, [&](std::size_t b) {
    const Index lo = static_cast<Index>(b * kBlock);
    const Index hi = std::min<Index>(points.rows(), lo + static_cast<Index>(kBlock));
    for (Index i = lo; i < hi; ++i) {
      const Eigen::ArrayXd q =
          (whitened.rowwise() - query.row(i)).rowwise().squaredNorm().array();
      out[i] = scale * (-0.5 * q).exp().sum();
    }
  });
  return out;
}

KdeDensity kde_fit(const Matrix& samples) {
  const Index k = samples.rows();
  const Index d = samples.cols();
  require(d == 1 || d == 2, ErrorKind::Parameter, "KDE supports 1 or 2 dimensions");
  require(k >= 2, ErrorKind::Parameter, "KDE needs at least two samples");
  const Eigen::RowVectorXd mean = samples.colwise().mean();
  const Matrix centered = samples.rowwise() - mean;
  const Matrix cov = centered.transpose() * centered / static_cast<double>(k - 1);
  const double factor = std::pow(static_cast<double>(k), -2.0 / static_cast<double>(d + 4));
  return KdeDensity(samples, cov * factor);
}

Grid Grid::covering(std::span<const KdeDensity* const> densities, const GridSpec& spec) {
  require(!densities.empty(), ErrorKind::Parameter, "grid needs at least one density");
  require(spec.points_per_axis >= 50, ErrorKind::Parameter,
          "integration grid too coarse: need at least 50 points per axis");
  require(spec.pad_bandwidths >= 0.0, ErrorKind::Parameter, "grid padding must be >= 0");
  const Index d = densities.front()->dim();
  Vector lo = Vector::Constant(d, std::numeric_limits<double>::infinity());
  Vector hi = -lo;
  for (const KdeDensity* kde : densities) {
    require(kde->dim() == d, ErrorKind::Shape, "densities disagree on dimension");
    const Vector pad = spec.pad_bandwidths * kde->kernel_sd();
    lo = lo.cwiseMin(kde->samples().colwise().minCoeff().transpose() - pad);
    hi = hi.cwiseMax(kde->samples().colwise().maxCoeff().transpose() + pad);
  }
  const Index n = spec.points_per_axis;
  Grid grid;
  std::vector<Vector> axis_weights;
  for (Index a = 0; a < d; ++a) {
    grid.axes.push_back(Vector::LinSpaced(n, lo[a], hi[a]));
    axis_weights.push_back(trapezoid_axis(grid.axes.back()));
  }
  if (d == 1) {
    grid.points = grid.axes[0];
    grid.weights = axis_weights[0];
  } else {
    grid.points.resize(n * n, 2);
    grid.weights.resize(n * n);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) {
        grid.points(i * n + j, 0) = grid.axes[0][i];
        grid.points(i * n + j, 1) = grid.axes[1][j];
        grid.weights[i * n + j] = axis_weights[0][i] * axis_weights[1][j];
      }
    }
  }
  return grid;
}

double kl_on_grid(const Vector& q, const Vector& p, const Vector& weights) {
  require(q.size() == p.size() && q.size() == weights.size(), ErrorKind::Shape,
          "KL grid arrays disagree in length");
  const Eigen::ArrayXd qf = q.array().max(kDensityFloor);
  const Eigen::ArrayXd pf = p.array().max(kDensityFloor);
  return (weights.array() * q.array() * (qf.log() - pf.log())).sum();
}

double kl_numeric(const Matrix& q_samples, const Matrix& p_samples, const GridSpec& spec,
                  int threads) {
  require(q_samples.cols() == p_samples.cols(), ErrorKind::Shape,
          "KL sample sets disagree on dimension");
  const KdeDensity q = kde_fit(q_samples);
  const KdeDensity p = kde_fit(p_samples);
  const KdeDensity* both[] = {&q, &p};
  const Grid grid = Grid::covering(both, spec);
  return kl_on_grid(q.evaluate(grid.points, threads), p.evaluate(grid.points, threads),
                    grid.weights);
}

double spearman(const Vector& a, const Vector& b) {
  require(a.size() == b.size(), ErrorKind::Shape, "Spearman inputs disagree in length");
  require(a.size() >= 2, ErrorKind::Parameter, "Spearman needs at least two points");
  const Vector ra = ranks(a);
  const Vector rb = ranks(b);
  const Eigen::ArrayXd da = ra.array() - ra.mean();
  const Eigen::ArrayXd db = rb.array() - rb.mean();
  const double denom = std::sqrt((da * da).sum() * (db * db).sum());
  if (denom == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return (da * db).sum() / denom;
}

Matrix particles_matrix(std::span<const Vector> particles) { return stack_rows(particles); }

KlTrajectory kl_trajectory(std::span<const Snapshot> snapshots, const Matrix& reference,
                           const GridSpec& spec, int threads) {
  KlTrajectory out;
  if (snapshots.empty()) return out;
  const KdeDensity ref = kde_fit(reference);
  std::vector<KdeDensity> fits;
  fits.reserve(snapshots.size());
  for (const Snapshot& s : snapshots) {
    fits.push_back(kde_fit(particles_matrix(s.particles)));
    require(fits.back().dim() == ref.dim(), ErrorKind::Shape,
            "snapshot dimension does not match the reference");
  }
  std::vector<const KdeDensity*> all{&ref};
  for (const auto& f : fits) all.push_back(&f);
  const Grid grid = Grid::covering(all, spec);
  const Vector p = ref.evaluate(grid.points, threads);
  Vector steps(static_cast<Index>(snapshots.size()));
  Vector kls(steps.size());
  for (std::size_t i = 0; i < snapshots.size(); ++i) {
    const double kl = kl_on_grid(fits[i].evaluate(grid.points, threads), p, grid.weights);
    out.points.emplace_back(snapshots[i].step, kl);
    steps[static_cast<Index>(i)] = static_cast<double>(snapshots[i].step);
    kls[static_cast<Index>(i)] = kl;
  }
  out.spearman = snapshots.size() >= 2 ? spearman(kls, steps) : 0.0;
  return out;
}

StationarityReport stationarity_monitor(const EnsembleState& state, const GaussianBayesModel& bm,
                                const Dataset& data, const StationarityOptions& options) {
  require(state.size() >= 1, ErrorKind::Parameter, "monitor needs at least one particle");
  require(options.fresh_draws >= 0, ErrorKind::Parameter, "fresh draw count must be >= 0");
  state.validate(bm.model.num_params());
  const JointObjective obj(bm, data);
  const Index k = state.size();
  const bool flat = bm.model.zero_diagonal_curvature();
  StationarityReport report;
  report.lhs_terms.resize(k);
  report.rhs_terms.resize(k);
  Vector norms(k);

  parallel_for(static_cast<std::size_t>(k), options.threads, [&](std::size_t pi) {
    const Index i = static_cast<Index>(pi);
    const Vector& theta = state.particles[pi];
    const double g0 = obj.gradient(theta, state.draws[pi]).squaredNorm();
    double sum = g0;
    if (options.fresh_draws > 0) {
      Rng rng(derive_seed(options.seed, state.particle_ids[pi]));
      for (Index r = 0; r < options.fresh_draws; ++r) {
        sum += obj.gradient(theta, perturb(bm, data, rng)).squaredNorm();
      }
    }
    report.lhs_terms[i] = sum / static_cast<double>(options.fresh_draws + 1);
    norms[i] = std::sqrt(g0);

    double rhs = 0.0;
    if (!flat && data.size() > 0) {
      const Vector curv = curvature_sums(bm.model, theta, data.inputs);
      const Vector resid = bm.model.predict(theta, data.inputs) - data.labels;
      rhs = (resid.array() / obj.noise_variances().array() * curv.array()).sum();
    }
    report.rhs_terms[i] = rhs;
    if (!std::isfinite(report.lhs_terms[i]) || !std::isfinite(rhs)) {
      fail(ErrorKind::Numeric,
           "stationarity monitor: non-finite value at particle " + std::to_string(i));
    }
  });

  report.lhs = report.lhs_terms.mean();
  report.rhs = flat ? 0.0 : report.rhs_terms.mean();
  report.satisfied = report.lhs >= report.rhs;
  report.grad_norm_mean = norms.mean();
  return report;
}

DirectionalDerivative directional_kl_derivative(const EnsembleState& state,
                                                const GaussianBayesModel& bm,
                                                const Dataset& data, int threads) {
  require(state.size() >= 1, ErrorKind::Parameter, "estimate needs at least one particle");
  state.validate(bm.model.num_params());
  const JointObjective obj(bm, data);
  const Index k = state.size();
  const PerturbationDraw none = PerturbationDraw::zero(data.size(), bm.model.num_params());
  Vector inner(k), trace(k);
  parallel_for(static_cast<std::size_t>(k), threads, [&](std::size_t pi) {
    const Vector& theta = state.particles[pi];
    inner[static_cast<Index>(pi)] =
        obj.gradient(theta, none).dot(obj.gradient(theta, state.draws[pi]));
    trace[static_cast<Index>(pi)] =
        hessian_trace_log_joint_perturbed(bm, data, state.draws[pi], theta);
  });
  DirectionalDerivative out;
  out.inner_product = inner.mean();
  out.hessian_trace = trace.mean();
  out.estimate = -(out.inner_product + out.hessian_trace);
  return out;
}

double directional_kl_derivative_estimate(const EnsembleState& state,
                                          const GaussianBayesModel& bm, const Dataset& data) {
  return directional_kl_derivative(state, bm, data).estimate;
}

double expected_perturbed_grad_sq(const GaussianBayesModel& bm, const Dataset& data,
                                  const Vector& theta) {
  const double base = grad_log_joint(bm, data, theta).squaredNorm();
  double jac_term = 0.0;
  if (data.size() > 0) {
    const Matrix jac = bm.model.jacobian(theta, data.inputs);
    jac_term = (jac.rowwise().squaredNorm().array() / bm.noise_variances(data).array()).sum();
  }
  return base + jac_term + bm.prior_variances().cwiseInverse().sum();
}

}  // namespace pbens
