#include "pbens/mcmc.hpp"

#include <cmath>

#include "pbens/error.hpp"
#include "pbens/parallel.hpp"

namespace pbens {

void MhConfig::validate() const {
  require(proposal_var > 0.0 && std::isfinite(proposal_var), ErrorKind::Parameter,
          "MH proposal variance must be positive");
  require(n_restarts >= 1 && burn_in >= 1 && thin >= 1 && samples_per_chain >= 1,
          ErrorKind::Parameter, "MH restarts, burn-in, thinning and sample counts must be >= 1");
}

std::vector<Vector> MhResult::samples() const {
  std::vector<Vector> out;
  for (const auto& chain : chains) out.insert(out.end(), chain.begin(), chain.end());
  return out;
}

MhResult mh_run(const GaussianBayesModel& bm, const Dataset& data, const MhConfig& cfg,
                std::uint64_t seed, int threads) {
  cfg.validate();
  const JointObjective obj(bm, data);
  const Index m = bm.model.num_params();
  const PerturbationDraw none = PerturbationDraw::zero(data.size(), m);
  const double proposal_sd = std::sqrt(cfg.proposal_var);

  MhResult result;
  result.chains.resize(cfg.n_restarts);
  std::vector<Index> accepted(cfg.n_restarts, 0);

  parallel_for(cfg.n_restarts, threads, [&](std::size_t c) {
    Rng rng(derive_seed(seed, c));
    Vector theta =
        init_from_prior(bm.model, std::sqrt(bm.alpha2_w), std::sqrt(bm.alpha2_b), rng);
    double lp = obj.value(theta, none);
    auto& chain = result.chains[c];
    chain.reserve(cfg.samples_per_chain);
    const Index total = cfg.burn_in + cfg.thin * cfg.samples_per_chain;
    Vector proposal(m);
    for (Index t = 1; t <= total; ++t) {
      for (Index j = 0; j < m; ++j) proposal[j] = theta[j] + proposal_sd * rng.normal();
      const double lp_new = obj.value(proposal, none);
      const double u = rng.uniform();
      if (std::isfinite(lp_new) && std::log(u) < lp_new - lp) {
        theta.swap(proposal);
        lp = lp_new;
        ++accepted[c];
      }
      if (t > cfg.burn_in && (t - cfg.burn_in) % cfg.thin == 0) chain.push_back(theta);
    }
  });

  Index acc = 0;
  for (Index a : accepted) acc += a;
  const double steps =
      static_cast<double>(cfg.n_restarts) * (cfg.burn_in + cfg.thin * cfg.samples_per_chain);
  result.acceptance_rate = static_cast<double>(acc) / steps;
  return result;
}

double gelman_rubin(const Matrix& draws) {
  const Index chains = draws.rows();
  const Index n = draws.cols();
  require(chains >= 2, ErrorKind::Parameter, "R-hat needs at least two chains");
  require(n >= 2, ErrorKind::Parameter, "R-hat needs at least two samples per chain");
  const Vector means = draws.rowwise().mean();
  double within = 0.0;
  for (Index c = 0; c < chains; ++c) {
    within += (draws.row(c).array() - means[c]).square().sum() / static_cast<double>(n - 1);
  }
  within /= static_cast<double>(chains);
  require(within > 0.0 && std::isfinite(within), ErrorKind::Numeric,
          "R-hat undefined: zero within-chain variance");
  const double between = static_cast<double>(n) *
                         (means.array() - means.mean()).square().sum() /
                         static_cast<double>(chains - 1);
  const double nn = static_cast<double>(n);
  return std::sqrt((within * (nn - 1.0) / nn + between / nn) / within);
}

double rhat_predictive(std::span<const std::vector<Vector>> chains, const RegressionModel& model,
                       const Matrix& test_inputs) {
  require(chains.size() >= 2, ErrorKind::Parameter, "R-hat needs at least two chains");
  const std::size_t n = chains.front().size();
  for (const auto& chain : chains) {
    require(chain.size() == n, ErrorKind::Shape, "R-hat chains must have equal length");
  }
  require(n >= 2, ErrorKind::Parameter, "R-hat needs at least two samples per chain");
  require(test_inputs.rows() >= 1, ErrorKind::Parameter, "R-hat needs at least one test input");

  const Index points = test_inputs.rows();
  std::vector<Matrix> per_input(points, Matrix(chains.size(), n));
  for (std::size_t c = 0; c < chains.size(); ++c) {
    for (std::size_t s = 0; s < n; ++s) {
      const Vector f = model.predict(chains[c][s], test_inputs);
      for (Index i = 0; i < points; ++i) per_input[i](c, s) = f[i];
    }
  }
  double total = 0.0;
  for (const auto& table : per_input) total += gelman_rubin(table);
  return total / static_cast<double>(points);
}

Matrix predictive_grid(const Matrix& inputs, Index points) {
  require(inputs.rows() >= 1, ErrorKind::Parameter, "predictive grid needs training inputs");
  require(points >= 2, ErrorKind::Parameter, "predictive grid needs at least two points");
  const Eigen::RowVectorXd lo = inputs.colwise().minCoeff();
  const Eigen::RowVectorXd hi = inputs.colwise().maxCoeff();
  Matrix grid(points, inputs.cols());
  for (Index i = 0; i < points; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(points - 1);
    grid.row(i) = lo + t * (hi - lo);
  }
  return grid;
}

}  // namespace pbens
