#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "pbens/bayes.hpp"
#include "pbens/types.hpp"

namespace pbens {

/// theta <- theta + step * grad log p̃
struct GradientDescent {
  double step = 0.01;
};

/// theta <- theta + step * g / (sqrt(sum of squared past g) + eps), elementwise.
struct Adagrad {
  double step = 0.01;
  double eps = 1e-8;
};

/// Limited-memory BFGS on -log p̃. One step() call is one outer iteration:
/// two-loop direction, then Armijo backtracking from `step`, halving at most
/// max_backtracks times.
struct Lbfgs {
  int history = 10;
  double step = 0.5;
  int max_backtracks = 20;
};

using OptimizerSpec = std::variant<GradientDescent, Adagrad, Lbfgs>;

void validate(const OptimizerSpec& spec);
std::string describe(const OptimizerSpec& spec);

/// Per-particle optimizer memory.
struct OptimizerState {
  Vector accumulator;               // Adagrad
  std::vector<Vector> s_history;    // L-BFGS position differences
  std::vector<Vector> y_history;    // L-BFGS gradient differences (of -log p̃)
  Vector gradient;                  // grad log p̃ at the current particle, once known
  double value = 0.0;               // log p̃ at the current particle, once known
  bool cached = false;
};

struct Snapshot {
  Index step = 0;
  std::vector<Vector> particles;
};

/// Which iteration counts get a snapshot. Step 0 (the initial state) is
/// always included when the schedule is not empty.
class SnapshotSchedule {
 public:
  static SnapshotSchedule none() { return SnapshotSchedule({}, 0); }
  /// Steps 0, interval, 2*interval, ...; floor(n_steps/interval)+1 snapshots.
  static SnapshotSchedule every(Index interval);
  /// `count` snapshots: step 0, then geometrically spaced steps ending at n_steps.
  static SnapshotSchedule geometric(Index count, Index n_steps);
  static SnapshotSchedule at(std::vector<Index> steps);

  bool contains(Index step) const;
  bool empty() const { return interval_ == 0 && steps_.empty(); }

 private:
  SnapshotSchedule(std::vector<Index> steps, Index interval)
      : steps_(std::move(steps)), interval_(interval) {}

  std::vector<Index> steps_;
  Index interval_ = 0;
};

struct EnsembleState {
  std::vector<Vector> particles;
  std::vector<PerturbationDraw> draws;
  std::vector<OptimizerState> optimizer;
  std::vector<std::uint64_t> particle_ids;
  Index step = 0;
  std::vector<Snapshot> snapshots;

  Index size() const { return static_cast<Index>(particles.size()); }
  void validate(Index num_params) const;
};

/// Draws k perturbations and starts every particle at its own anchor.
/// Particle i uses the stream derive_seed(seed, first_id + i).
EnsembleState init_ensemble(const GaussianBayesModel& bm, const Dataset& data, Index k,
                            std::uint64_t seed, std::uint64_t first_id = 0);

/// One optimizer iteration on every particle, each ascending its own frozen
/// log p̃. Throws Divergence on any non-finite value.
void step(EnsembleState& state, const GaussianBayesModel& bm, const Dataset& data,
          const OptimizerSpec& opt, int threads = 1);

struct RunOptions {
  Index n_steps = 0;
  SnapshotSchedule snapshots = SnapshotSchedule::none();
  int threads = 1;
};

/// Continues `state` for options.n_steps iterations, recording snapshots.
void advance(EnsembleState& state, const GaussianBayesModel& bm, const Dataset& data,
             const OptimizerSpec& opt, const RunOptions& options);

EnsembleState run(const GaussianBayesModel& bm, const Dataset& data, Index k,
                  const OptimizerSpec& opt, const RunOptions& options, std::uint64_t seed);

/// run() with snapshots every `snapshot_every` steps (0 disables snapshots).
EnsembleState run(const GaussianBayesModel& bm, const Dataset& data, Index k,
                  const OptimizerSpec& opt, Index n_steps, Index snapshot_every,
                  std::uint64_t seed, int threads = 1);

/// |grad log p̃| per particle at the current state.
Vector gradient_norms(const EnsembleState& state, const GaussianBayesModel& bm,
                      const Dataset& data, int threads = 1);

struct ConvergenceReport {
  Index steps = 0;
  double max_grad_norm = 0.0;
  bool converged = false;
};

/// Steps until every particle's |grad log p̃| < grad_tol or max_steps is hit.
ConvergenceReport optimize_to_tolerance(EnsembleState& state, const GaussianBayesModel& bm,
                                        const Dataset& data, const OptimizerSpec& opt,
                                        double grad_tol, Index max_steps, int threads = 1);

}  // namespace pbens
