#include "pbens/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "pbens/bench.hpp"
#include "pbens/classify.hpp"
#include "pbens/diagnostics.hpp"
#include "pbens/ensemble.hpp"
#include "pbens/error.hpp"
#include "pbens/linear_exact.hpp"
#include "pbens/mcmc.hpp"

#ifndef PBENS_DATA_DIR
#define PBENS_DATA_DIR "data"
#endif

namespace pbens {

namespace {

constexpr const char* kVersion = "0.1.0";

// Independent streams under the master seed.
enum Stream : std::uint64_t {
  kDataStream = 1,
  kFeatureStream = 2,
  kEnsembleStream = 3,
  kReferenceStream = 4,
  kChannelBStream = 5,
  kMonitorStream = 6,
};

// ---- config handling

std::string json_type(const Json& j) {
  if (j.is_null()) return "null";
  if (j.is_boolean()) return "boolean";
  if (j.is_number_integer() || j.is_number_unsigned()) return "integer";
  if (j.is_number()) return "number";
  if (j.is_string()) return "string";
  if (j.is_array()) return "array";
  return "object";
}

void merge_into(Json& base, const Json& user, const std::string& path) {
  require(user.is_object(), ErrorKind::Config,
          (path.empty() ? std::string("config") : path) + " must be a JSON object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    require(base.contains(it.key()), ErrorKind::Config, "unknown config key '" + key + "'");
    Json& slot = base[it.key()];
    const Json& value = it.value();
    if (slot.is_object()) {
      merge_into(slot, value, key);
      continue;
    }
    const std::string want = json_type(slot);
    const std::string got = json_type(value);
    const bool ok = want == got || want == "null" || value.is_null() ||
                    (want == "number" && got == "integer");
    require(ok, ErrorKind::Config,
            "config key '" + key + "' expects " + want + ", got " + got);
    slot = value;
  }
}

Json optimizer_json(const std::string& kind, double step) {
  return Json{{"kind", kind}, {"step", step}, {"eps", 1e-8}, {"history", 10},
              {"max_backtracks", 20}};
}

OptimizerSpec parse_optimizer(const Json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  const double step = j.at("step").get<double>();
  OptimizerSpec spec;
  if (kind == "gd") {
    spec = GradientDescent{step};
  } else if (kind == "adagrad") {
    spec = Adagrad{step, j.at("eps").get<double>()};
  } else if (kind == "lbfgs") {
    spec = Lbfgs{j.at("history").get<int>(), step, j.at("max_backtracks").get<int>()};
  } else {
    fail(ErrorKind::Config, "optimizer.kind must be one of gd, adagrad, lbfgs (got '" + kind + "')");
  }
  try {
    validate(spec);
  } catch (const Error& e) {
    fail(ErrorKind::Config, std::string("optimizer: ") + e.what());
  }
  return spec;
}

Index positive_index(const Json& cfg, const char* key, Index min = 1) {
  const auto v = cfg.at(key).get<long long>();
  require(v >= min, ErrorKind::Config,
          std::string("config key '") + key + "' must be >= " + std::to_string(min));
  return static_cast<Index>(v);
}

double positive_number(const Json& cfg, const char* key) {
  const double v = cfg.at(key).get<double>();
  require(v > 0.0 && std::isfinite(v), ErrorKind::Config,
          std::string("config key '") + key + "' must be positive");
  return v;
}

std::vector<Index> hidden_widths(const Json& cfg) {
  std::vector<Index> out;
  for (const auto& w : cfg.at("hidden")) {
    require(w.is_number_integer() && w.get<long long>() >= 1, ErrorKind::Config,
            "hidden widths must be positive integers");
    out.push_back(w.get<Index>());
  }
  require(!out.empty(), ErrorKind::Config, "hidden must list at least one layer width");
  return out;
}

std::filesystem::path resolve_data_path(const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative() && !std::filesystem::exists(path)) {
    const std::filesystem::path shipped = std::filesystem::path(PBENS_DATA_DIR) / path.filename();
    if (std::filesystem::exists(shipped)) return shipped;
  }
  return path;
}

Dataset dataset_from_config(const Json& cfg, std::uint64_t seed) {
  const std::string csv = cfg.at("csv").get<std::string>();
  if (!csv.empty()) return load_csv(resolve_data_path(csv));
  Rng rng(derive_seed(seed, kDataStream));
  return make_synthetic(cfg.at("dataset").get<std::string>(), rng);
}

// ---- CSV text

class Csv {
 public:
  explicit Csv(const std::string& header) { os_ << std::setprecision(17) << header << '\n'; }
  template <class... Ts>
  void row(const Ts&... values) {
    std::size_t i = 0;
    ((os_ << (i++ ? "," : "") << values), ...);
    os_ << '\n';
  }
  std::string str() const { return os_.str(); }

 private:
  std::ostringstream os_;
};

std::string matrix_csv(const std::string& header, const Matrix& m) {
  std::ostringstream os;
  os << std::setprecision(17) << header << '\n';
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) os << (j ? "," : "") << m(i, j);
    os << '\n';
  }
  return os.str();
}

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::string timestamp_utc() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

// ---- defaults

Json linear_defaults() {
  return Json{{"preset", "full"},
              {"seed", 0},
              {"dataset", "trig_64"},
              {"csv", ""},
              {"n_features", 1024},
              {"lengthscale", 1.6},
              {"sigma2", 0.1},
              {"alpha2", 1.0},
              {"k", 200},
              {"optimizer", optimizer_json("adagrad", 0.01)},
              {"n_steps", 400},
              {"kl_every", 10},
              {"self_distance_reps", 20},
              {"self_distance_k", 200},
              {"covariance_ridge", nullptr}};
}

Json linear_preset(const std::string& name) {
  if (name == "full") return Json::object();
  if (name == "desk") return Json{{"n_features", 64}, {"k", 400}, {"kl_every", 1}};
  fail(ErrorKind::Config, "unknown preset '" + name + "' (expected full or desk)");
}

Json toy_relu_defaults() {
  return Json{{"seed", 0},
              {"dataset", "toy_relu_24"},
              {"csv", ""},
              {"sigma2", 0.05},
              {"alpha2", 1.0},
              {"k", 200},
              {"optimizer", optimizer_json("gd", 0.05)},
              {"n_steps", 800},
              {"snapshots", {{"schedule", "geometric"}, {"count", 25}, {"every", 40}}},
              {"mcmc",
               {{"proposal_var", 0.5},
                {"n_restarts", 10},
                {"burn_in", 10000},
                {"thin", 5000},
                {"samples_per_chain", 20}}},
              {"rhat_points", 50},
              {"kde_grid_points", 200},
              {"density_grid_points", 60},
              {"stationarity_fresh_draws", 0}};
}

Json uci_defaults() {
  Json grid = Json::array();
  for (double s : default_sigma2_grid()) grid.push_back(s);
  return Json{{"seed", 0},
              {"dataset", "boston"},
              {"csv", "data/boston.csv"},
              {"hidden", {50}},
              {"alpha2_w", 1.0},
              {"alpha2_b", 1.0},
              {"k", 200},
              {"optimizer", optimizer_json("lbfgs", 0.5)},
              {"n_steps", 32},
              {"split", {{"test_fraction", 0.1}, {"validation_fraction", 0.2}, {"n_repeats", 10}}},
              {"sigma2_grid", grid}};
}

Json classify_defaults() {
  return Json{{"seed", 0},
              {"dataset", "classif_2d"},
              {"csv", ""},
              {"alpha_eps", 0.01},
              {"hidden", {50}},
              {"alpha2_w", 1.0},
              {"alpha2_b", 1.0},
              {"k", 100},
              {"optimizer", optimizer_json("lbfgs", 0.5)},
              {"n_steps", 100},
              {"grid_points", 50},
              {"probe_points", 50}};
}

// ---- runners

ExperimentOutput run_linear(const Json& cfg, const RunContext& ctx) {
  const auto seed = cfg.at("seed").get<std::uint64_t>();
  const Dataset data = dataset_from_config(cfg, seed);
  require(data.input_dim() == 1, ErrorKind::Config,
          "linear-exactness needs one-dimensional inputs");
  const Index D = positive_index(cfg, "n_features");
  const Index k = positive_index(cfg, "k", 2);
  const Index n_steps = positive_index(cfg, "n_steps", 0);
  const Index kl_every = positive_index(cfg, "kl_every");
  const double sigma2 = positive_number(cfg, "sigma2");
  const double alpha2 = positive_number(cfg, "alpha2");
  const OptimizerSpec opt = parse_optimizer(cfg.at("optimizer"));
  const Index sd_k = positive_index(cfg, "self_distance_k", 2);
  const int sd_reps = static_cast<int>(positive_index(cfg, "self_distance_reps"));
  double ridge = 0.0;
  if (cfg.at("covariance_ridge").is_null()) {
    ridge = std::min(k, sd_k) <= D ? 1e-6 : 0.0;
  } else {
    ridge = cfg.at("covariance_ridge").get<double>();
    require(ridge >= 0.0, ErrorKind::Config, "covariance_ridge must be >= 0");
  }

  Rng feature_rng(derive_seed(seed, kFeatureStream));
  const TrigFeatureMap features =
      TrigFeatureMap::sample(D, positive_number(cfg, "lengthscale"), feature_rng);
  const GaussianBayesModel bm{RegressionModel::linear(features), sigma2, alpha2, alpha2};
  const GaussianPosterior post =
      posterior_exact(design_matrix(data.inputs.col(0), features.omega), data.labels, sigma2, alpha2);

  const double self_dist =
      self_distance(post, sd_k, sd_reps, derive_seed(seed, kReferenceStream), ridge);

  EnsembleState state = init_ensemble(bm, data, k, derive_seed(seed, kEnsembleStream));
  Json kl = Json::array();
  Csv csv("step,kl");
  double max_increase = -std::numeric_limits<double>::infinity();
  double prev = std::numeric_limits<double>::quiet_NaN();
  for (Index s = 0;; ++s) {
    if (s % kl_every == 0 || s == n_steps) {
      const SampleMoments m = sample_moments(state.particles, ridge);
      const double value = kl_to_posterior(m.mean, m.covariance, post);
      kl.push_back({{"step", s}, {"kl", value}});
      csv.row(s, value);
      if (std::isfinite(prev)) max_increase = std::max(max_increase, value - prev);
      prev = value;
    }
    if (s == n_steps) break;
    step(state, bm, data, opt, ctx.threads);
  }

  const SampleMoments final_m = sample_moments(state.particles, 0.0);
  Json results{{"experiment", "linear-exactness"},
               {"seed", seed},
               {"n_features", D},
               {"k", k},
               {"n_points", data.size()},
               {"covariance_ridge", ridge},
               {"self_distance", self_dist},
               {"self_distance_k", sd_k},
               {"self_distance_reps", sd_reps},
               {"kl_initial", kl.front().at("kl")},
               {"kl_final", kl.back().at("kl")},
               {"max_kl_increase", kl.size() > 1 ? Json(max_increase) : Json(nullptr)},
               {"final_mean_max_abs_error", (final_m.mean - post.mean).cwiseAbs().maxCoeff()},
               {"final_cov_rel_frobenius",
                (final_m.covariance - post.covariance).norm() / post.covariance.norm()},
               {"kl", kl}};
  ExperimentOutput out;
  out.results = std::move(results);
  out.files.emplace_back("kl_trajectory.csv", csv.str());
  return out;
}

SnapshotSchedule toy_schedule(const Json& snap, Index n_steps) {
  const std::string kind = snap.at("schedule").get<std::string>();
  if (n_steps == 0) return SnapshotSchedule::at({0});
  if (kind == "geometric") {
    const Index count = std::min(positive_index(snap, "count", 2), n_steps + 1);
    return SnapshotSchedule::geometric(count, n_steps);
  }
  if (kind == "every") return SnapshotSchedule::every(positive_index(snap, "every"));
  fail(ErrorKind::Config, "snapshots.schedule must be geometric or every");
}

ExperimentOutput run_toy_relu(const Json& cfg, const RunContext& ctx) {
  const auto seed = cfg.at("seed").get<std::uint64_t>();
  const Dataset data = dataset_from_config(cfg, seed);
  require(data.input_dim() == 1, ErrorKind::Config, "toy-relu needs one-dimensional inputs");
  const double sigma2 = positive_number(cfg, "sigma2");
  const double alpha2 = positive_number(cfg, "alpha2");
  const GaussianBayesModel bm{RegressionModel::toy_relu(), sigma2, alpha2, alpha2};
  const Index k = positive_index(cfg, "k", 2);
  const Index n_steps = positive_index(cfg, "n_steps", 0);
  const OptimizerSpec opt = parse_optimizer(cfg.at("optimizer"));
  const Json& mc = cfg.at("mcmc");
  MhConfig mh{positive_number(mc, "proposal_var"), positive_index(mc, "n_restarts"),
              positive_index(mc, "burn_in"), positive_index(mc, "thin"),
              positive_index(mc, "samples_per_chain")};
  GridSpec grid{positive_index(cfg, "kde_grid_points", 50), 3.0};

  const MhResult ref = mh_run(bm, data, mh, derive_seed(seed, kReferenceStream), ctx.threads);
  const std::vector<Vector> ref_samples = ref.samples();
  const Matrix ref_matrix = particles_matrix(ref_samples);
  const Matrix probe = predictive_grid(data.inputs, positive_index(cfg, "rhat_points", 2));
  Json rhat = nullptr;
  if (mh.n_restarts >= 2 && mh.samples_per_chain >= 2) {
    rhat = rhat_predictive(ref.chains, bm.model, probe);
  }

  RunOptions run_opts;
  run_opts.n_steps = n_steps;
  run_opts.threads = ctx.threads;
  run_opts.snapshots = toy_schedule(cfg.at("snapshots"), n_steps);
  EnsembleState state = init_ensemble(bm, data, k, derive_seed(seed, kEnsembleStream));
  advance(state, bm, data, opt, run_opts);

  const KlTrajectory traj = kl_trajectory(state.snapshots, ref_matrix, grid, ctx.threads);

  StationarityOptions t2;
  t2.fresh_draws = positive_index(cfg, "stationarity_fresh_draws", 0);
  t2.seed = derive_seed(seed, kMonitorStream);
  t2.threads = ctx.threads;
  Json kl = Json::array();
  Json monitor = Json::array();
  Csv kl_csv("step,kl");
  Csv t2_csv("step,lhs,rhs,satisfied,grad_norm_mean");
  for (std::size_t i = 0; i < state.snapshots.size(); ++i) {
    const auto [s, value] = traj.points[i];
    kl.push_back({{"step", s}, {"kl", value}});
    kl_csv.row(s, value);
    EnsembleState view;
    view.particles = state.snapshots[i].particles;
    view.draws = state.draws;
    view.particle_ids = state.particle_ids;
    view.optimizer.resize(state.particles.size());
    const StationarityReport rep = stationarity_monitor(view, bm, data, t2);
    monitor.push_back({{"step", s},
                       {"lhs", rep.lhs},
                       {"rhs", rep.rhs},
                       {"satisfied", rep.satisfied},
                       {"grad_norm_mean", rep.grad_norm_mean}});
    t2_csv.row(s, rep.lhs, rep.rhs, rep.satisfied ? 1 : 0, rep.grad_norm_mean);
  }

  // densities on a shared coarse grid for plotting
  const KdeDensity q_kde = kde_fit(particles_matrix(state.particles));
  const KdeDensity p_kde = kde_fit(ref_matrix);
  const KdeDensity* both[] = {&q_kde, &p_kde};
  const Grid dgrid = Grid::covering(both, {positive_index(cfg, "density_grid_points", 50), 3.0});
  Matrix dens(dgrid.points.rows(), 4);
  dens.leftCols(2) = dgrid.points;
  dens.col(2) = q_kde.evaluate(dgrid.points, ctx.threads);
  dens.col(3) = p_kde.evaluate(dgrid.points, ctx.threads);

  Json results{{"experiment", "toy-relu"},
               {"seed", seed},
               {"n_points", data.size()},
               {"k", k},
               {"n_steps", n_steps},
               {"optimizer", describe(opt)},
               {"spearman", std::isfinite(traj.spearman) ? Json(traj.spearman) : Json(nullptr)},
               {"n_snapshots", state.snapshots.size()},
               {"kl_initial", kl.front().at("kl")},
               {"kl_final", kl.back().at("kl")},
               {"rhat", rhat},
               {"mcmc_acceptance_rate", ref.acceptance_rate},
               {"mcmc_samples", ref_samples.size()},
               {"kl", kl},
               {"stationarity", monitor}};
  ExperimentOutput out;
  out.results = std::move(results);
  out.files.emplace_back("kl_trajectory.csv", kl_csv.str());
  out.files.emplace_back("stationarity.csv", t2_csv.str());
  out.files.emplace_back("particles_final.csv",
                         matrix_csv("w1,w2", particles_matrix(state.particles)));
  out.files.emplace_back("mcmc_samples.csv", matrix_csv("w1,w2", ref_matrix));
  out.files.emplace_back("densities.csv", matrix_csv("w1,w2,ensemble,mcmc", dens));
  return out;
}

EnsembleRecipe recipe_from_config(const Json& cfg, int threads) {
  EnsembleRecipe r;
  r.hidden = hidden_widths(cfg);
  r.alpha2_w = positive_number(cfg, "alpha2_w");
  r.alpha2_b = positive_number(cfg, "alpha2_b");
  r.k = positive_index(cfg, "k");
  r.optimizer = parse_optimizer(cfg.at("optimizer"));
  r.n_steps = positive_index(cfg, "n_steps", 0);
  r.threads = threads;
  return r;
}

ExperimentOutput run_uci(const Json& cfg, const RunContext& ctx) {
  const auto seed = cfg.at("seed").get<std::uint64_t>();
  const std::string csv = cfg.at("csv").get<std::string>();
  require(!csv.empty(), ErrorKind::Config, "uci needs a csv path");
  const Dataset data = load_csv(resolve_data_path(csv));
  const EnsembleRecipe recipe = recipe_from_config(cfg, ctx.threads);
  const Json& sp = cfg.at("split");
  SplitSpec split{sp.at("test_fraction").get<double>(), sp.at("validation_fraction").get<double>(),
                  positive_index(sp, "n_repeats"), seed};
  try {
    split.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Config, std::string("split: ") + e.what());
  }
  std::vector<double> grid = cfg.at("sigma2_grid").get<std::vector<double>>();
  require(!grid.empty(), ErrorKind::Config, "sigma2_grid must not be empty");
  for (double g : grid) require(g > 0.0, ErrorKind::Config, "sigma2_grid values must be > 0");

  const UciSummary summary = uci_protocol(data, recipe, split, grid);
  std::string model = "ensemble-" + std::to_string(recipe.hidden.size()) + "x" +
                      std::to_string(recipe.hidden.front());
  const std::string name = cfg.at("dataset").get<std::string>();
  Json metrics = Json::array();
  Json timings = Json::array();
  Csv table("repeat,split_seed,sigma2,rmse,mnll");
  for (const auto& r : summary.repeats) {
    metrics.push_back({{"dataset", name},
                       {"model", model},
                       {"split_seed", r.split_seed},
                       {"sigma2", r.sigma2},
                       {"rmse", r.rmse},
                       {"mnll", r.mnll}});
    timings.push_back({{"split_seed", r.split_seed}, {"runtime_s", r.runtime_s}});
    table.row(r.repeat, r.split_seed, r.sigma2, r.rmse, r.mnll);
  }
  ExperimentOutput out;
  out.results = Json{{"experiment", "uci"},
                     {"dataset", name},
                     {"model", model},
                     {"seed", seed},
                     {"n_rows", data.size()},
                     {"n_inputs", data.input_dim()},
                     {"rmse_mean", summary.rmse_mean},
                     {"rmse_std", summary.rmse_std},
                     {"mnll_mean", summary.mnll_mean},
                     {"mnll_std", summary.mnll_std},
                     {"metrics", metrics}};
  out.metadata["repeat_timings"] = timings;
  out.files.emplace_back("metrics.csv", table.str());
  return out;
}

ExperimentOutput run_classify(const Json& cfg, const RunContext& ctx) {
  const auto seed = cfg.at("seed").get<std::uint64_t>();
  const Dataset data = dataset_from_config(cfg, seed);
  require(data.input_dim() == 2, ErrorKind::Config, "classify-demo needs two-dimensional inputs");
  const Index ones = (data.labels.array() == 1.0).count();
  require(ones > 0 && ones < data.size(), ErrorKind::Parameter,
          "classification data must contain both classes");
  const LatentTargets latent = labels_to_latent(data.labels, positive_number(cfg, "alpha_eps"));
  const Dataset da = latent_dataset(data.inputs, latent, true);
  const Dataset db = latent_dataset(data.inputs, latent, false);
  const EnsembleRecipe recipe = recipe_from_config(cfg, ctx.threads);
  // sigma2 is unused: every point carries its own latent variance
  const GaussianBayesModel bm = recipe.bayes_model(2, 1.0);
  RunOptions opts;
  opts.n_steps = recipe.n_steps;
  opts.threads = ctx.threads;
  const EnsembleState sa = run(bm, da, recipe.k, recipe.optimizer, opts,
                               derive_seed(seed, kEnsembleStream));
  const EnsembleState sb = run(bm, db, recipe.k, recipe.optimizer, opts,
                               derive_seed(seed, kChannelBStream));

  auto bands = [&](const Matrix& inputs) {
    const Matrix p = latent_to_prob(predict_particles(bm.model, sa.particles, inputs),
                                    predict_particles(bm.model, sb.particles, inputs));
    Matrix out(inputs.rows(), 3);
    for (Index j = 0; j < inputs.rows(); ++j) {
      std::vector<double> col(p.col(j).data(), p.col(j).data() + p.rows());
      out(j, 0) = p.col(j).mean();
      out(j, 1) = quantile(col, 0.025);
      out(j, 2) = quantile(col, 0.975);
    }
    return out;
  };

  const Matrix train = bands(data.inputs);
  double true_prob = 0.0;
  Index correct = 0;
  for (Index i = 0; i < data.size(); ++i) {
    const bool one = data.labels[i] == 1.0;
    true_prob += one ? train(i, 0) : 1.0 - train(i, 0);
    correct += (train(i, 0) > 0.5) == one;
  }
  true_prob /= static_cast<double>(data.size());

  // probe from the class-0 mean to the class-1 mean
  Eigen::RowVector2d m0 = Eigen::RowVector2d::Zero(), m1 = Eigen::RowVector2d::Zero();
  for (Index i = 0; i < data.size(); ++i) {
    (data.labels[i] == 1.0 ? m1 : m0) += data.inputs.row(i);
  }
  m1 /= static_cast<double>(ones);
  m0 /= static_cast<double>(data.size() - ones);
  const Index probe_n = positive_index(cfg, "probe_points", 2);
  Matrix probe(probe_n, 2);
  const Vector t = Vector::LinSpaced(probe_n, 0.0, 1.0);
  for (Index i = 0; i < probe_n; ++i) probe.row(i) = m0 + t[i] * (m1 - m0);
  const Matrix probe_bands = bands(probe);
  bool monotone = true;
  for (Index i = 1; i < probe_n; ++i) monotone &= probe_bands(i, 0) >= probe_bands(i - 1, 0);

  const Index g = positive_index(cfg, "grid_points", 2);
  const Eigen::RowVectorXd lo = data.inputs.colwise().minCoeff();
  const Eigen::RowVectorXd hi = data.inputs.colwise().maxCoeff();
  const Eigen::RowVectorXd pad = 0.25 * (hi - lo);
  const Vector ax = Vector::LinSpaced(g, lo[0] - pad[0], hi[0] + pad[0]);
  const Vector ay = Vector::LinSpaced(g, lo[1] - pad[1], hi[1] + pad[1]);
  Matrix grid(g * g, 2);
  for (Index i = 0; i < g; ++i)
    for (Index j = 0; j < g; ++j) grid.row(i * g + j) << ax[i], ay[j];
  Matrix grid_out(g * g, 5);
  grid_out << grid, bands(grid);
  Matrix probe_out(probe_n, 6);
  probe_out << t, probe, probe_bands;

  ExperimentOutput out;
  out.results = Json{{"experiment", "classify-demo"},
                     {"seed", seed},
                     {"n_points", data.size()},
                     {"k", recipe.k},
                     {"mean_true_class_prob", true_prob},
                     {"train_accuracy",
                      static_cast<double>(correct) / static_cast<double>(data.size())},
                     {"probe_monotone", monotone},
                     {"probe_start", {m0[0], m0[1]}},
                     {"probe_end", {m1[0], m1[1]}},
                     {"probe_prob_start", probe_bands(0, 0)},
                     {"probe_prob_end", probe_bands(probe_n - 1, 0)}};
  out.files.emplace_back("prob_grid.csv", matrix_csv("x1,x2,mean,q025,q975", grid_out));
  out.files.emplace_back("probe.csv", matrix_csv("t,x1,x2,mean,q025,q975", probe_out));
  return out;
}

}  // namespace

std::vector<std::string> experiment_kinds() {
  return {"linear-exactness", "toy-relu", "uci", "classify-demo"};
}

Json default_config(const std::string& kind) {
  if (kind == "linear-exactness") return linear_defaults();
  if (kind == "toy-relu") return toy_relu_defaults();
  if (kind == "uci") return uci_defaults();
  if (kind == "classify-demo") return classify_defaults();
  fail(ErrorKind::Config, "unknown experiment '" + kind + "'");
}

Json resolve_config(const std::string& kind, const Json& user) {
  Json cfg = default_config(kind);
  if (user.is_null()) return cfg;
  require(user.is_object(), ErrorKind::Config, "config must be a JSON object");
  if (kind == "linear-exactness" && user.contains("preset")) {
    require(user.at("preset").is_string(), ErrorKind::Config, "preset must be a string");
    const std::string preset = user.at("preset").get<std::string>();
    merge_into(cfg, linear_preset(preset), "");
    cfg["preset"] = preset;
  }
  merge_into(cfg, user, "");
  return cfg;
}

ExperimentOutput run_experiment(const std::string& kind, const Json& user_config,
                                const RunContext& ctx) {
  Json cfg = resolve_config(kind, user_config);
  if (ctx.seed) cfg["seed"] = *ctx.seed;
  require(cfg.at("seed").is_number_unsigned() || cfg.at("seed").is_number_integer(),
          ErrorKind::Config, "seed must be a non-negative integer");
  require(!cfg.at("seed").is_number_integer() || cfg.at("seed").get<long long>() >= 0,
          ErrorKind::Config, "seed must be a non-negative integer");
  const int threads = ctx.threads <= 0 ? 1 : ctx.threads;
  RunContext run_ctx = ctx;
  run_ctx.threads = threads;

  const std::string started = timestamp_utc();
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentOutput out;
  try {
    if (kind == "linear-exactness") out = run_linear(cfg, run_ctx);
    else if (kind == "toy-relu") out = run_toy_relu(cfg, run_ctx);
    else if (kind == "uci") out = run_uci(cfg, run_ctx);
    else out = run_classify(cfg, run_ctx);
  } catch (const Json::exception& e) {
    fail(ErrorKind::Config, std::string("bad config value: ") + e.what());
  }
  out.config = cfg;
  out.metadata["experiment"] = kind;
  out.metadata["version"] = kVersion;
  out.metadata["threads"] = threads;
  out.metadata["started_at"] = started;
  out.metadata["runtime_s"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

void write_outputs(const std::filesystem::path& dir, const ExperimentOutput& out) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, ErrorKind::Io, "cannot create output directory '" + dir.string() + "'");
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream f(dir / name, std::ios::binary);
    require(static_cast<bool>(f), ErrorKind::Io, "cannot write '" + (dir / name).string() + "'");
    f << text;
    require(static_cast<bool>(f), ErrorKind::Io, "write failed for '" + (dir / name).string() + "'");
  };
  write("results.json", out.results.dump(2) + "\n");
  write("config.json", out.config.dump(2) + "\n");
  write("metadata.json", out.metadata.dump(2) + "\n");
  for (const auto& [name, text] : out.files) write(name, text);
}

}  // namespace pbens
