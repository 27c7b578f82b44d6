#include "pbens/bench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <tuple>

#include "pbens/error.hpp"

namespace pbens {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_field(std::string_view field, std::size_t line, std::size_t column) {
  field = trim(field);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (field.empty() || ec != std::errc() || ptr != field.data() + field.size()) {
    fail(ErrorKind::Parse, "line " + std::to_string(line) + ", column " +
                               std::to_string(column) + ": not a number: '" +
                               std::string(field) + "'");
  }
  return value;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

Dataset parse_csv(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 0;
  std::size_t width = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<double> row;
    std::string_view rest(line);
    std::size_t column = 1;
    while (true) {
      const auto comma = rest.find(',');
      row.push_back(parse_field(rest.substr(0, comma), line_no, column));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
      ++column;
    }
    if (rows.empty()) {
      width = row.size();
      require(width >= 2, ErrorKind::Parse,
              "line " + std::to_string(line_no) + ": need at least one input and a label column");
    } else if (row.size() != width) {
      fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": expected " +
                                 std::to_string(width) + " columns, found " +
                                 std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  require(!rows.empty(), ErrorKind::Parse, "CSV contains no data rows");

  Dataset data;
  const Index n = static_cast<Index>(rows.size());
  const Index d = static_cast<Index>(width) - 1;
  data.inputs.resize(n, d);
  data.labels.resize(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) data.inputs(i, j) = rows[i][j];
    data.labels[i] = rows[i][d];
  }
  return data;
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_csv(buf.str());
  } catch (const Error& e) {
    fail(e.kind(), path.string() + ": " + e.what());
  }
}

void save_csv(const std::filesystem::path& path, const Dataset& data) {
  data.validate();
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write '" + path.string() + "'");
  out << std::setprecision(17);
  for (Index i = 0; i < data.size(); ++i) {
    for (Index j = 0; j < data.input_dim(); ++j) out << data.inputs(i, j) << ',';
    out << data.labels[i] << '\n';
  }
  require(static_cast<bool>(out), ErrorKind::Io, "write failed for '" + path.string() + "'");
}

Dataset Normalization::apply(const Dataset& data) const {
  require(data.input_dim() == input_mean.size(), ErrorKind::Shape,
          "normalization fitted on a different input dimension");
  Dataset out = data;
  out.inputs = ((data.inputs.rowwise() - input_mean.transpose()).array().rowwise() /
                input_std.transpose().array())
                   .matrix();
  out.labels = ((data.labels.array() - label_mean) / label_std).matrix();
  if (data.heteroscedastic()) out.noise_var = data.noise_var / (label_std * label_std);
  return out;
}

Vector Normalization::denormalize_labels(const Vector& labels) const {
  return (labels.array() * label_std + label_mean).matrix();
}

Normalization normalization_fit(const Dataset& train) {
  train.validate();
  require(train.size() >= 1, ErrorKind::Parameter, "cannot normalize an empty training set");
  Normalization t;
  const double n = static_cast<double>(train.size());
  t.input_mean = train.inputs.colwise().mean().transpose();
  t.input_std =
      ((train.inputs.rowwise() - t.input_mean.transpose()).colwise().squaredNorm() / n)
          .cwiseSqrt()
          .transpose();
  for (Index j = 0; j < t.input_std.size(); ++j) {
    if (!(t.input_std[j] > 0.0)) t.input_std[j] = 1.0;
  }
  t.label_mean = train.labels.mean();
  t.label_std = std::sqrt((train.labels.array() - t.label_mean).square().sum() / n);
  if (!(t.label_std > 0.0)) t.label_std = 1.0;
  return t;
}

NormalizedSets normalize_fit_apply(const Dataset& train, const std::vector<Dataset>& others) {
  NormalizedSets out;
  out.transform = normalization_fit(train);
  out.train = out.transform.apply(train);
  for (const auto& d : others) out.others.push_back(out.transform.apply(d));
  return out;
}

void SplitSpec::validate() const {
  require(test_fraction > 0.0 && test_fraction < 1.0, ErrorKind::Parameter,
          "test fraction must lie in (0, 1)");
  require(validation_fraction > 0.0 && validation_fraction < 1.0, ErrorKind::Parameter,
          "validation fraction must lie in (0, 1)");
  require(n_repeats >= 1, ErrorKind::Parameter, "need at least one split repeat");
}

std::vector<Index> permutation(Index n, Rng& rng) {
  std::vector<Index> p(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) p[i] = i;
  for (Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Index>(rng.uniform() * static_cast<double>(i + 1));
    std::swap(p[i], p[std::min(j, i)]);
  }
  return p;
}

Split make_split(Index n, const SplitSpec& spec, Index repeat) {
  spec.validate();
  const auto n_test = static_cast<Index>(std::llround(spec.test_fraction * static_cast<double>(n)));
  const Index n_train = n - n_test;
  const auto n_val =
      static_cast<Index>(std::llround(spec.validation_fraction * static_cast<double>(n_train)));
  require(n_test >= 1 && n_val >= 1 && n_train - n_val >= 1, ErrorKind::Parameter,
          "dataset too small for the requested split (n=" + std::to_string(n) + ")");
  Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(repeat)));
  const std::vector<Index> p = permutation(n, rng);
  Split s;
  s.test.assign(p.begin(), p.begin() + n_test);
  s.train.assign(p.begin() + n_test, p.end());
  s.validation.assign(s.train.begin(), s.train.begin() + n_val);
  s.reduced.assign(s.train.begin() + n_val, s.train.end());
  for (auto* v : {&s.test, &s.train, &s.validation, &s.reduced}) std::sort(v->begin(), v->end());
  return s;
}

std::vector<std::string> synthetic_generators() {
  return {"toy_relu_24", "trig_64", "deep_demo", "classif_2d"};
}

Dataset make_synthetic(const std::string& generator, Rng& rng) {
  Dataset d;
  auto regression = [&](Index n, double lo, double hi, double noise_var, auto truth) {
    d.inputs.resize(n, 1);
    d.labels.resize(n);
    const double sd = std::sqrt(noise_var);
    for (Index i = 0; i < n; ++i) {
      const double x = rng.uniform(lo, hi);
      d.inputs(i, 0) = x;
      d.labels[i] = truth(x) + sd * rng.normal();
    }
  };
  if (generator == "toy_relu_24") {
    regression(24, -0.3, 0.3, 0.05,
               [](double x) { return std::max(0.0, 2.0 * x) + std::max(0.0, -x); });
  } else if (generator == "trig_64") {
    regression(64, -3.0, 3.0, 0.1, [](double x) { return std::sin(2.0 * x) + 0.3 * x; });
  } else if (generator == "deep_demo") {
    regression(64, -3.0, 3.0, 0.1,
               [](double x) { return std::sin(x) + 0.5 * std::cos(2.0 * x); });
  } else if (generator == "classif_2d") {
    const Index n = 80;
    d.inputs.resize(n, 2);
    d.labels.resize(n);
    for (Index i = 0; i < n;) {
      const double a = rng.uniform(-2.0, 2.0);
      const double b = rng.uniform(-2.0, 2.0);
      if (std::abs(a + b) < 0.4) continue;
      d.inputs(i, 0) = a;
      d.inputs(i, 1) = b;
      d.labels[i] = a + b > 0.0 ? 1.0 : 0.0;
      ++i;
    }
  } else {
    fail(ErrorKind::Config, "unknown synthetic generator '" + generator + "'");
  }
  return d;
}

GaussianBayesModel EnsembleRecipe::bayes_model(Index input_dim, double sigma2) const {
  std::vector<Index> widths{input_dim};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(1);
  GaussianBayesModel bm{RegressionModel::relu_mlp(widths), sigma2, alpha2_w, alpha2_b};
  bm.validate();
  return bm;
}

std::vector<double> default_sigma2_grid() { return {0.01, 0.025, 0.05, 0.1, 0.25, 0.5, 1.0}; }

GridSearchResult grid_select_sigma2(const EnsembleRecipe& recipe, const Dataset& train,
                                    const Dataset& validation, std::vector<double> candidates,
                                    std::uint64_t seed) {
  require(!candidates.empty(), ErrorKind::Parameter, "sigma2 grid is empty");
  for (double c : candidates) {
    require(c > 0.0 && std::isfinite(c), ErrorKind::Parameter, "sigma2 candidates must be > 0");
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  GridSearchResult result;
  result.candidates = candidates;
  if (candidates.size() == 1) {
    result.best_sigma2 = candidates.front();
    return result;
  }
  double best = std::numeric_limits<double>::infinity();
  for (double s2 : candidates) {
    const GaussianBayesModel bm = recipe.bayes_model(train.input_dim(), s2);
    RunOptions opts;
    opts.n_steps = recipe.n_steps;
    opts.threads = recipe.threads;
    const EnsembleState state = run(bm, train, recipe.k, recipe.optimizer, opts, seed);
    const double mnll = predictive_mnll(bm, state.particles, validation);
    result.validation_mnll.push_back(mnll);
    if (mnll <= best) {  // ascending order, so ties go to the larger sigma2
      best = mnll;
      result.best_sigma2 = s2;
    }
  }
  require(std::isfinite(best), ErrorKind::Numeric, "validation MNLL is not finite for any sigma2");
  return result;
}

std::pair<double, double> mean_std(const std::vector<double>& values) {
  require(!values.empty(), ErrorKind::Parameter, "mean of an empty list");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  if (values.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

UciSummary uci_protocol(const Dataset& data, const EnsembleRecipe& recipe, const SplitSpec& split,
                        const std::vector<double>& sigma2_grid) {
  data.validate();
  split.validate();
  UciSummary summary;
  std::vector<double> rmses, mnlls;
  for (Index r = 0; r < split.n_repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const Split s = make_split(data.size(), split, r);
    const std::uint64_t fit_seed = derive_seed(split.seed ^ 0x5bd1e995u, static_cast<std::uint64_t>(r));

    // sigma2 selection on the reduced training set
    const NormalizedSets sel =
        normalize_fit_apply(data.subset(s.reduced), {data.subset(s.validation)});
    const GridSearchResult grid =
        grid_select_sigma2(recipe, sel.train, sel.others[0], sigma2_grid, fit_seed);

    // refit on the full training portion
    const NormalizedSets fit = normalize_fit_apply(data.subset(s.train), {data.subset(s.test)});
    const GaussianBayesModel bm = recipe.bayes_model(data.input_dim(), grid.best_sigma2);
    RunOptions opts;
    opts.n_steps = recipe.n_steps;
    opts.threads = recipe.threads;
    const EnsembleState state = run(bm, fit.train, recipe.k, recipe.optimizer, opts, fit_seed);

    const Dataset& test = fit.others[0];
    const Matrix preds =
        (fit.transform.label_std *
             predict_particles(bm.model, state.particles, test.inputs).array() +
         fit.transform.label_mean)
            .matrix();
    const Vector raw_labels = fit.transform.denormalize_labels(test.labels);
    const double scale2 = fit.transform.label_std * fit.transform.label_std;

    UciRepeat rep;
    rep.repeat = r;
    rep.split_seed = derive_seed(split.seed, static_cast<std::uint64_t>(r));
    rep.sigma2 = grid.best_sigma2;
    rep.rmse = mean_prediction_rmse(preds, raw_labels);
    rep.mnll = mixture_mnll(preds, raw_labels, grid.best_sigma2 * scale2);
    rep.runtime_s = seconds_since(t0);
    rmses.push_back(rep.rmse);
    mnlls.push_back(rep.mnll);
    summary.repeats.push_back(rep);
  }
  std::tie(summary.rmse_mean, summary.rmse_std) = mean_std(rmses);
  std::tie(summary.mnll_mean, summary.mnll_std) = mean_std(mnlls);
  return summary;
}

}  // namespace pbens
