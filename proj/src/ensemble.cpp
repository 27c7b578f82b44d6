#include "pbens/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "pbens/error.hpp"
#include "pbens/parallel.hpp"

namespace pbens {

namespace {

constexpr double kArmijo = 1e-4;
constexpr double kCurvatureFloor = 1e-12;
constexpr double kRoundoff = 64.0 * std::numeric_limits<double>::epsilon();

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

bool finite(const Vector& v) { return v.allFinite(); }

void diverged(Index particle, Index step, const std::string& what) {
  fail(ErrorKind::Divergence, "particle " + std::to_string(particle) + " diverged at step " +
                                  std::to_string(step) + ": " + what);
}

void ensure_cached(OptimizerState& st, const JointObjective& obj, const Vector& theta,
                   const PerturbationDraw& draw) {
  if (st.cached) return;
  st.value = obj.value_and_gradient(theta, draw, st.gradient);
  st.cached = true;
}

void gd_step(const GradientDescent& o, Vector& theta, OptimizerState& st,
             const JointObjective& obj, const PerturbationDraw& draw) {
  ensure_cached(st, obj, theta, draw);
  theta += o.step * st.gradient;
  st.cached = false;
}

void adagrad_step(const Adagrad& o, Vector& theta, OptimizerState& st, const JointObjective& obj,
                  const PerturbationDraw& draw) {
  ensure_cached(st, obj, theta, draw);
  if (st.accumulator.size() != theta.size()) st.accumulator = Vector::Zero(theta.size());
  st.accumulator.array() += st.gradient.array().square();
  theta.array() += o.step * st.gradient.array() / (st.accumulator.array().sqrt() + o.eps);
  st.cached = false;
}

// Minimizes F = -log p̃. st.gradient holds grad log p̃ = -grad F.
void lbfgs_step(const Lbfgs& o, Vector& theta, OptimizerState& st, const JointObjective& obj,
                const PerturbationDraw& draw) {
  ensure_cached(st, obj, theta, draw);
  const Vector gF = -st.gradient;
  const double F = -st.value;

  Vector dir = -gF;
  const std::size_t m = st.s_history.size();
  if (m == 0) {
    dir /= std::max(1.0, gF.norm());
  } else {
    std::vector<double> rho(m), a(m);
    Vector q = gF;
    for (std::size_t i = m; i-- > 0;) {
      rho[i] = 1.0 / st.y_history[i].dot(st.s_history[i]);
      a[i] = rho[i] * st.s_history[i].dot(q);
      q -= a[i] * st.y_history[i];
    }
    const double gamma = st.s_history.back().dot(st.y_history.back()) /
                         st.y_history.back().squaredNorm();
    q *= gamma;
    for (std::size_t i = 0; i < m; ++i) {
      const double b = rho[i] * st.y_history[i].dot(q);
      q += (a[i] - b) * st.s_history[i];
    }
    dir = -q;
  }

  double slope = gF.dot(dir);
  if (!(slope < 0.0)) {
    // not a descent direction; fall back to scaled steepest descent
    st.s_history.clear();
    st.y_history.clear();
    dir = -gF / std::max(1.0, gF.norm());
    slope = gF.dot(dir);
    if (!(slope < 0.0)) return;  // gradient is zero
  }

  double t = o.step;
  Vector grad_new;
  for (int it = 0; it < o.max_backtracks; ++it, t *= 0.5) {
    const Vector trial = theta + t * dir;
    const double v = obj.value_and_gradient(trial, draw, grad_new);
    if (!std::isfinite(v)) continue;
    // Once the predicted decrease drops below the rounding noise in F the
    // Armijo test is meaningless; fall back to requiring a smaller gradient.
    const bool resolvable = -t * slope > kRoundoff * std::max(1.0, std::abs(F));
    const bool accept = resolvable ? (-v <= F + kArmijo * t * slope)
                                   : (-v <= F + kRoundoff * std::max(1.0, std::abs(F)) &&
                                      grad_new.norm() < gF.norm());
    if (accept) {
      const Vector s = trial - theta;
      const Vector y = (-grad_new) - gF;
      if (s.dot(y) > kCurvatureFloor * s.squaredNorm()) {
        st.s_history.push_back(s);
        st.y_history.push_back(y);
        if (static_cast<int>(st.s_history.size()) > o.history) {
          st.s_history.erase(st.s_history.begin());
          st.y_history.erase(st.y_history.begin());
        }
      }
      theta = trial;
      st.value = v;
      st.gradient = grad_new;
      return;
    }
  }
  // line search exhausted: stay put and drop curvature memory
  st.s_history.clear();
  st.y_history.clear();
}

void record_snapshot(EnsembleState& state) {
  state.snapshots.push_back({state.step, state.particles});
}

}  // namespace

void validate(const OptimizerSpec& spec) {
  std::visit(Overloaded{
                 [](const GradientDescent& o) {
                   require(o.step >= 0.0 && std::isfinite(o.step), ErrorKind::Parameter,
                           "gradient descent step must be non-negative");
                 },
                 [](const Adagrad& o) {
                   require(o.step > 0.0 && std::isfinite(o.step), ErrorKind::Parameter,
                           "Adagrad step must be positive");
                   require(o.eps > 0.0, ErrorKind::Parameter, "Adagrad eps must be positive");
                 },
                 [](const Lbfgs& o) {
                   require(o.history >= 1, ErrorKind::Parameter, "L-BFGS history must be >= 1");
                   require(o.step > 0.0 && std::isfinite(o.step), ErrorKind::Parameter,
                           "L-BFGS initial step must be positive");
                   require(o.max_backtracks >= 1, ErrorKind::Parameter,
                           "L-BFGS line search needs at least one trial");
                 },
             },
             spec);
}

std::string describe(const OptimizerSpec& spec) {
  std::ostringstream os;
  std::visit(Overloaded{
                 [&](const GradientDescent& o) { os << "gd(step=" << o.step << ")"; },
                 [&](const Adagrad& o) {
                   os << "adagrad(step=" << o.step << ", eps=" << o.eps << ")";
                 },
                 [&](const Lbfgs& o) {
                   os << "lbfgs(history=" << o.history << ", step=" << o.step
                      << ", max_backtracks=" << o.max_backtracks << ")";
                 },
             },
             spec);
  return os.str();
}

SnapshotSchedule SnapshotSchedule::every(Index interval) {
  require(interval >= 1, ErrorKind::Parameter, "snapshot interval must be >= 1");
  return SnapshotSchedule({}, interval);
}

SnapshotSchedule SnapshotSchedule::geometric(Index count, Index n_steps) {
  require(count >= 2, ErrorKind::Parameter, "geometric schedule needs at least two snapshots");
  require(n_steps >= count - 1, ErrorKind::Parameter,
          "geometric schedule has more snapshots than steps");
  std::vector<Index> steps{0};
  // count-1 log-spaced positive steps in [1, n_steps], bumped to stay distinct
  const Index m = count - 1;
  for (Index i = 0; i < m; ++i) {
    const double frac = m == 1 ? 1.0 : static_cast<double>(i) / static_cast<double>(m - 1);
    Index s = static_cast<Index>(std::llround(std::pow(static_cast<double>(n_steps), frac)));
    s = std::max(s, steps.back() + 1);
    steps.push_back(s);
  }
  // resolve overshoot from the bumps by pulling the tail back
  steps.back() = n_steps;
  for (std::size_t i = steps.size() - 1; i-- > 1;) {
    steps[i] = std::min(steps[i], steps[i + 1] - 1);
  }
  return SnapshotSchedule(std::move(steps), 0);
}

SnapshotSchedule SnapshotSchedule::at(std::vector<Index> steps) {
  std::sort(steps.begin(), steps.end());
  steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
  require(steps.empty() || steps.front() >= 0, ErrorKind::Parameter,
          "snapshot steps must be non-negative");
  if (!steps.empty() && steps.front() != 0) steps.insert(steps.begin(), 0);
  return SnapshotSchedule(std::move(steps), 0);
}

bool SnapshotSchedule::contains(Index step) const {
  if (interval_ > 0) return step % interval_ == 0;
  return std::binary_search(steps_.begin(), steps_.end(), step);
}

void EnsembleState::validate(Index num_params) const {
  const std::size_t k = particles.size();
  require(draws.size() == k && optimizer.size() == k && particle_ids.size() == k,
          ErrorKind::Shape, "ensemble state arrays disagree on particle count");
  for (std::size_t i = 0; i < k; ++i) {
    require(particles[i].size() == num_params, ErrorKind::Shape,
            "particle " + std::to_string(i) + " has the wrong parameter count");
  }
}

EnsembleState init_ensemble(const GaussianBayesModel& bm, const Dataset& data, Index k,
                            std::uint64_t seed, std::uint64_t first_id) {
  require(k >= 1, ErrorKind::Parameter, "ensemble needs at least one particle");
  bm.validate();
  data.validate();
  EnsembleState state;
  state.particles.reserve(k);
  state.draws.reserve(k);
  for (Index i = 0; i < k; ++i) {
    const std::uint64_t id = first_id + static_cast<std::uint64_t>(i);
    Rng rng(derive_seed(seed, id));
    PerturbationDraw draw = perturb(bm, data, rng);
    state.particles.push_back(draw.anchor);
    state.draws.push_back(std::move(draw));
    state.particle_ids.push_back(id);
  }
  state.optimizer.resize(k);
  return state;
}

void step(EnsembleState& state, const GaussianBayesModel& bm, const Dataset& data,
          const OptimizerSpec& opt, int threads) {
  validate(opt);
  state.validate(bm.model.num_params());
  const JointObjective obj(bm, data);
  const Index current = state.step;
  parallel_for(state.particles.size(), threads, [&](std::size_t i) {
    Vector& theta = state.particles[i];
    OptimizerState& st = state.optimizer[i];
    const PerturbationDraw& draw = state.draws[i];
    std::visit(Overloaded{
                   [&](const GradientDescent& o) { gd_step(o, theta, st, obj, draw); },
                   [&](const Adagrad& o) { adagrad_step(o, theta, st, obj, draw); },
                   [&](const Lbfgs& o) { lbfgs_step(o, theta, st, obj, draw); },
               },
               opt);
    if (!finite(theta)) diverged(static_cast<Index>(i), current, "non-finite parameters");
    if (st.cached && (!std::isfinite(st.value) || !finite(st.gradient))) {
      diverged(static_cast<Index>(i), current, "non-finite objective or gradient");
    }
  });
  ++state.step;
}

void advance(EnsembleState& state, const GaussianBayesModel& bm, const Dataset& data,
             const OptimizerSpec& opt, const RunOptions& options) {
  require(options.n_steps >= 0, ErrorKind::Parameter, "step count must be non-negative");
  validate(opt);
  const Index start = state.step;
  if (!options.snapshots.empty() && options.snapshots.contains(0) && start == 0 &&
      (state.snapshots.empty() || state.snapshots.back().step != 0)) {
    record_snapshot(state);
  }
  for (Index s = 0; s < options.n_steps; ++s) {
    step(state, bm, data, opt, options.threads);
    if (!options.snapshots.empty() && options.snapshots.contains(state.step)) {
      record_snapshot(state);
    }
  }
}

EnsembleState run(const GaussianBayesModel& bm, const Dataset& data, Index k,
                  const OptimizerSpec& opt, const RunOptions& options, std::uint64_t seed) {
  validate(opt);
  EnsembleState state = init_ensemble(bm, data, k, seed);
  advance(state, bm, data, opt, options);
  return state;
}

EnsembleState run(const GaussianBayesModel& bm, const Dataset& data, Index k,
                  const OptimizerSpec& opt, Index n_steps, Index snapshot_every,
                  std::uint64_t seed, int threads) {
  require(snapshot_every >= 0, ErrorKind::Parameter, "snapshot interval must be >= 0");
  RunOptions options;
  options.n_steps = n_steps;
  options.threads = threads;
  options.snapshots =
      snapshot_every > 0 ? SnapshotSchedule::every(snapshot_every) : SnapshotSchedule::none();
  return run(bm, data, k, opt, options, seed);
}

Vector gradient_norms(const EnsembleState& state, const GaussianBayesModel& bm,
                      const Dataset& data, int threads) {
  state.validate(bm.model.num_params());
  const JointObjective obj(bm, data);
  Vector norms(state.size());
  parallel_for(state.particles.size(), threads, [&](std::size_t i) {
    norms[static_cast<Index>(i)] = obj.gradient(state.particles[i], state.draws[i]).norm();
  });
  return norms;
}

ConvergenceReport optimize_to_tolerance(EnsembleState& state, const GaussianBayesModel& bm,
                                        const Dataset& data, const OptimizerSpec& opt,
                                        double grad_tol, Index max_steps, int threads) {
  require(grad_tol > 0.0, ErrorKind::Parameter, "gradient tolerance must be positive");
  require(max_steps >= 0, ErrorKind::Parameter, "step budget must be non-negative");
  ConvergenceReport report;
  report.max_grad_norm = gradient_norms(state, bm, data, threads).maxCoeff();
  while (report.max_grad_norm >= grad_tol && report.steps < max_steps) {
    step(state, bm, data, opt, threads);
    ++report.steps;
    report.max_grad_norm = gradient_norms(state, bm, data, threads).maxCoeff();
  }
  report.converged = report.max_grad_norm < grad_tol;
  return report;
}

}  // namespace pbens
