#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pbens/bayes.hpp"
#include "pbens/ensemble.hpp"
#include "pbens/types.hpp"

namespace pbens {

/// Numeric CSV without header; the last column is the label. Blank lines
/// are skipped. Throws Io if the file cannot be read and Parse (with the
/// line number) for malformed or ragged rows or an empty file.
Dataset load_csv(const std::filesystem::path& path);
Dataset parse_csv(const std::string& text);
void save_csv(const std::filesystem::path& path, const Dataset& data);

/// Per-column affine normalization fitted on training data only.
struct Normalization {
  Vector input_mean, input_std;
  double label_mean = 0.0;
  double label_std = 1.0;

  Dataset apply(const Dataset& data) const;
  Vector denormalize_labels(const Vector& labels) const;
};

struct NormalizedSets {
  Dataset train;
  std::vector<Dataset> others;
  Normalization transform;
};

/// Zero-variance columns keep std = 1.
Normalization normalization_fit(const Dataset& train);
NormalizedSets normalize_fit_apply(const Dataset& train, const std::vector<Dataset>& others);

struct SplitSpec {
  double test_fraction = 0.1;
  double validation_fraction = 0.2;  // of the training portion
  Index n_repeats = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Split {
  std::vector<Index> train;       // full training portion (reduced + validation)
  std::vector<Index> reduced;     // training minus validation
  std::vector<Index> validation;
  std::vector<Index> test;
};

/// Repeat r permutes the rows with derive_seed(spec.seed, r).
Split make_split(Index n, const SplitSpec& spec, Index repeat);

/// Uniform random permutation of 0..n-1 (Fisher-Yates).
std::vector<Index> permutation(Index n, Rng& rng);

/// Synthetic generators:
///   toy_relu_24  x ~ U(-0.3, 0.3), y = ReLU(2x) + ReLU(-x) + N(0, 0.05), n = 24
///   trig_64      x ~ U(-3, 3),     y = sin(2x) + 0.3x + N(0, 0.1),      n = 64
///   deep_demo    x ~ U(-3, 3),     y = sin(x) + 0.5 cos(2x) + N(0, 0.1), n = 64
///   classif_2d   x ~ U(-2, 2)^2 with |x1 + x2| >= 0.4, y = [x1 + x2 > 0], n = 80
Dataset make_synthetic(const std::string& generator, Rng& rng);
std::vector<std::string> synthetic_generators();

/// Everything needed to build and fit one ensemble on (normalized) data.
struct EnsembleRecipe {
  std::vector<Index> hidden{50};
  double alpha2_w = 1.0;
  double alpha2_b = 1.0;
  Index k = 200;
  OptimizerSpec optimizer = Lbfgs{10, 0.5, 20};
  Index n_steps = 32;
  int threads = 1;

  GaussianBayesModel bayes_model(Index input_dim, double sigma2) const;
};

struct GridSearchResult {
  double best_sigma2 = 0.0;
  std::vector<double> candidates;  // sorted ascending
  std::vector<double> validation_mnll;
};

/// Fits one ensemble per candidate on `train` (same seed for all) and picks
/// the lowest validation MNLL; ties go to the larger sigma2.
GridSearchResult grid_select_sigma2(const EnsembleRecipe& recipe, const Dataset& train,
                                    const Dataset& validation, std::vector<double> candidates,
                                    std::uint64_t seed);

std::vector<double> default_sigma2_grid();

struct UciRepeat {
  Index repeat = 0;
  std::uint64_t split_seed = 0;
  double sigma2 = 0.0;
  double rmse = 0.0;  // denormalized
  double mnll = 0.0;  // denormalized
  double runtime_s = 0.0;
};

struct UciSummary {
  std::vector<UciRepeat> repeats;
  double rmse_mean = 0.0, rmse_std = 0.0;
  double mnll_mean = 0.0, mnll_std = 0.0;
};

/// Split, normalize on the training part, grid-search sigma2 on the held-out
/// validation part, refit on the full training part and score the test part
/// in original label units.
UciSummary uci_protocol(const Dataset& data, const EnsembleRecipe& recipe, const SplitSpec& split,
                        const std::vector<double>& sigma2_grid);

/// Mean and sample standard deviation (0 for a single value).
std::pair<double, double> mean_std(const std::vector<double>& values);

}  // namespace pbens
