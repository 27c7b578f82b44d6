#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pbens/bayes.hpp"
#include "pbens/types.hpp"

namespace pbens {

/// Random-walk Metropolis-Hastings with an isotropic Gaussian proposal.
/// Each restart starts from the prior, discards burn_in states and then
/// keeps every thin-th state until samples_per_chain are collected.
struct MhConfig {
  double proposal_var = 0.5;
  Index n_restarts = 10;
  Index burn_in = 10000;
  Index thin = 5000;
  Index samples_per_chain = 20;

  void validate() const;
  Index total_samples() const { return n_restarts * samples_per_chain; }

  static MhConfig toy_relu() { return {0.5, 10, 10000, 5000, 20}; }
  static MhConfig deep_relu() { return {0.01, 10, 40000, 20000, 20}; }
};

struct MhResult {
  std::vector<std::vector<Vector>> chains;  // one per restart
  double acceptance_rate = 0.0;

  std::vector<Vector> samples() const;
};

/// Chain c uses the stream derive_seed(seed, c).
MhResult mh_run(const GaussianBayesModel& bm, const Dataset& data, const MhConfig& cfg,
                std::uint64_t seed, int threads = 1);

/// Gelman-Rubin statistic sqrt((W (n-1)/n + B/n) / W) for an m x n table
/// (one row per chain). Throws Numeric when the within-chain variance is 0.
double gelman_rubin(const Matrix& draws);

/// Mean over test inputs of the Gelman-Rubin statistic of f(x; theta).
double rhat_predictive(std::span<const std::vector<Vector>> chains, const RegressionModel& model,
                       const Matrix& test_inputs);

/// `points` inputs equispaced between the columnwise min and max of `inputs`.
Matrix predictive_grid(const Matrix& inputs, Index points = 50);

}  // namespace pbens
