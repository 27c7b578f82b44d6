#include "pbens/pbens.h"

#include <cstring>
#include <memory>
#include <string>

#include "pbens/bayes.hpp"
#include "pbens/bench.hpp"
#include "pbens/diagnostics.hpp"
#include "pbens/ensemble.hpp"
#include "pbens/error.hpp"
#include "pbens/experiments.hpp"

struct pbens_dataset {
  pbens::Dataset data;
};

struct pbens_model {
  pbens::GaussianBayesModel bm;
};

struct pbens_ensemble {
  std::shared_ptr<const pbens::GaussianBayesModel> bm;
  std::shared_ptr<const pbens::Dataset> data;
  pbens::EnsembleState state;
};

namespace {

thread_local std::string g_last_error;

pbens_status status_of(pbens::ErrorKind kind) {
  using pbens::ErrorKind;
  switch (kind) {
    case ErrorKind::Shape: return PBENS_ERR_SHAPE;
    case ErrorKind::Parameter: return PBENS_ERR_PARAMETER;
    case ErrorKind::Numeric: return PBENS_ERR_NUMERIC;
    case ErrorKind::Divergence: return PBENS_ERR_DIVERGENCE;
    case ErrorKind::Parse: return PBENS_ERR_PARSE;
    case ErrorKind::Config: return PBENS_ERR_CONFIG;
    case ErrorKind::Io: return PBENS_ERR_IO;
  }
  return PBENS_ERR_INTERNAL;
}

template <class F>
pbens_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return PBENS_OK;
  } catch (const pbens::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const pbens::Json::exception& e) {
    g_last_error = std::string("invalid JSON: ") + e.what();
    return PBENS_ERR_CONFIG;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return PBENS_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return PBENS_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return PBENS_ERR_INTERNAL;
  }
}

pbens_status null_argument() {
  g_last_error = "a required pointer argument is NULL";
  return PBENS_ERR_NULL_ARGUMENT;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

pbens::Json parse_config(const char* text) {
  if (text == nullptr || *text == '\0') return pbens::Json(nullptr);
  try {
    return pbens::Json::parse(text);
  } catch (const pbens::Json::parse_error& e) {
    pbens::fail(pbens::ErrorKind::Config, std::string("config is not valid JSON: ") + e.what());
  }
}

pbens::OptimizerSpec to_spec(const pbens_optimizer& o) {
  switch (o.kind) {
    case PBENS_OPT_GD: return pbens::GradientDescent{o.step};
    case PBENS_OPT_ADAGRAD: return pbens::Adagrad{o.step, o.eps};
    case PBENS_OPT_LBFGS: return pbens::Lbfgs{o.history, o.step, o.max_backtracks};
  }
  pbens::fail(pbens::ErrorKind::Parameter, "unknown optimizer kind");
}

pbens::Matrix row_major(const double* values, size_t n, size_t d) {
  pbens::Matrix m(static_cast<pbens::Index>(n), static_cast<pbens::Index>(d));
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < d; ++j) m(i, j) = values[i * d + j];
  return m;
}

}  // namespace

extern "C" {

const char* pbens_last_error(void) { return g_last_error.c_str(); }

const char* pbens_status_name(pbens_status status) {
  switch (status) {
    case PBENS_OK: return "ok";
    case PBENS_ERR_SHAPE: return "shape error";
    case PBENS_ERR_PARAMETER: return "parameter error";
    case PBENS_ERR_NUMERIC: return "numeric error";
    case PBENS_ERR_DIVERGENCE: return "divergence";
    case PBENS_ERR_PARSE: return "parse error";
    case PBENS_ERR_CONFIG: return "config error";
    case PBENS_ERR_IO: return "io error";
    case PBENS_ERR_NULL_ARGUMENT: return "null argument";
    case PBENS_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* pbens_version(void) { return "0.1.0"; }

void pbens_string_free(char* s) { std::free(s); }

pbens_status pbens_dataset_create(const double* inputs, const double* labels, size_t n, size_t d,
                                  pbens_dataset** out) {
  if (out == nullptr) return null_argument();
  *out = nullptr;
  return guarded([&] {
    pbens::require(n == 0 || (inputs != nullptr || d == 0), pbens::ErrorKind::Parameter,
                   "inputs is NULL");
    pbens::require(n == 0 || labels != nullptr, pbens::ErrorKind::Parameter, "labels is NULL");
    auto ds = std::make_unique<pbens_dataset>();
    ds->data.inputs = row_major(inputs, n, d);
    ds->data.labels = pbens::Vector(static_cast<pbens::Index>(n));
    for (size_t i = 0; i < n; ++i) ds->data.labels[i] = labels[i];
    ds->data.validate();
    *out = ds.release();
  });
}

pbens_status pbens_dataset_load_csv(const char* path, pbens_dataset** out) {
  if (out == nullptr || path == nullptr) return null_argument();
  *out = nullptr;
  return guarded([&] { *out = new pbens_dataset{pbens::load_csv(path)}; });
}

pbens_status pbens_dataset_synthetic(const char* generator, uint64_t seed, pbens_dataset** out) {
  if (out == nullptr || generator == nullptr) return null_argument();
  *out = nullptr;
  return guarded([&] {
    pbens::Rng rng(seed);
    *out = new pbens_dataset{pbens::make_synthetic(generator, rng)};
  });
}

size_t pbens_dataset_size(const pbens_dataset* data) {
  return data ? static_cast<size_t>(data->data.size()) : 0;
}

size_t pbens_dataset_dim(const pbens_dataset* data) {
  return data ? static_cast<size_t>(data->data.input_dim()) : 0;
}

pbens_status pbens_dataset_copy(const pbens_dataset* data, double* inputs, double* labels) {
  if (data == nullptr) return null_argument();
  const auto& d = data->data;
  if (inputs != nullptr) {
    for (pbens::Index i = 0; i < d.size(); ++i)
      for (pbens::Index j = 0; j < d.input_dim(); ++j) *inputs++ = d.inputs(i, j);
  }
  if (labels != nullptr) {
    for (pbens::Index i = 0; i < d.size(); ++i) labels[i] = d.labels[i];
  }
  return PBENS_OK;
}

void pbens_dataset_free(pbens_dataset* data) { delete data; }

pbens_status pbens_model_relu_mlp(const size_t* widths, size_t n_widths, double sigma2,
                                  double alpha2_w, double alpha2_b, pbens_model** out) {
  if (out == nullptr || widths == nullptr) return null_argument();
  *out = nullptr;
  return guarded([&] {
    std::vector<pbens::Index> w(widths, widths + n_widths);
    pbens::GaussianBayesModel bm{pbens::RegressionModel::relu_mlp(w), sigma2, alpha2_w, alpha2_b};
    bm.validate();
    *out = new pbens_model{std::move(bm)};
  });
}

pbens_status pbens_model_linear_trig(size_t n_features, double lengthscale, uint64_t seed,
                                     double sigma2, double alpha2, pbens_model** out) {
  if (out == nullptr) return null_argument();
  *out = nullptr;
  return guarded([&] {
    pbens::Rng rng(seed);
    auto features = pbens::TrigFeatureMap::sample(static_cast<pbens::Index>(n_features),
                                                  lengthscale, rng);
    pbens::GaussianBayesModel bm{pbens::RegressionModel::linear(std::move(features)), sigma2,
                                 alpha2, alpha2};
    bm.validate();
    *out = new pbens_model{std::move(bm)};
  });
}

pbens_status pbens_model_toy_relu(double sigma2, double alpha2, pbens_model** out) {
  if (out == nullptr) return null_argument();
  *out = nullptr;
  return guarded([&] {
    pbens::GaussianBayesModel bm{pbens::RegressionModel::toy_relu(), sigma2, alpha2, alpha2};
    bm.validate();
    *out = new pbens_model{std::move(bm)};
  });
}

size_t pbens_model_num_params(const pbens_model* model) {
  return model ? static_cast<size_t>(model->bm.model.num_params()) : 0;
}

pbens_status pbens_model_log_joint(const pbens_model* model, const pbens_dataset* data,
                                   const double* theta, double* out) {
  if (!model || !data || !theta || !out) return null_argument();
  return guarded([&] {
    const pbens::Vector t =
        Eigen::Map<const pbens::Vector>(theta, model->bm.model.num_params());
    *out = pbens::log_joint(model->bm, data->data, t);
  });
}

pbens_status pbens_model_grad_log_joint(const pbens_model* model, const pbens_dataset* data,
                                        const double* theta, double* grad_out) {
  if (!model || !data || !theta || !grad_out) return null_argument();
  return guarded([&] {
    const pbens::Index m = model->bm.model.num_params();
    const pbens::Vector t = Eigen::Map<const pbens::Vector>(theta, m);
    Eigen::Map<pbens::Vector>(grad_out, m) = pbens::grad_log_joint(model->bm, data->data, t);
  });
}

void pbens_model_free(pbens_model* model) { delete model; }

pbens_optimizer pbens_optimizer_default(pbens_optimizer_kind kind) {
  pbens_optimizer o{kind, 0.01, 1e-8, 10, 20};
  if (kind == PBENS_OPT_LBFGS) o.step = 0.5;
  return o;
}

pbens_status pbens_ensemble_create(const pbens_model* model, const pbens_dataset* data, size_t k,
                                   uint64_t seed, pbens_ensemble** out) {
  if (out == nullptr || model == nullptr || data == nullptr) return null_argument();
  *out = nullptr;
  return guarded([&] {
    auto ens = std::make_unique<pbens_ensemble>();
    ens->bm = std::make_shared<const pbens::GaussianBayesModel>(model->bm);
    ens->data = std::make_shared<const pbens::Dataset>(data->data);
    pbens::JointObjective check(*ens->bm, *ens->data);  // shape validation
    ens->state = pbens::init_ensemble(*ens->bm, *ens->data, static_cast<pbens::Index>(k), seed);
    *out = ens.release();
  });
}

pbens_status pbens_ensemble_step(pbens_ensemble* ens, const pbens_optimizer* opt, size_t n_steps,
                                 int threads) {
  if (ens == nullptr || opt == nullptr) return null_argument();
  return guarded([&] {
    const pbens::OptimizerSpec spec = to_spec(*opt);
    for (size_t s = 0; s < n_steps; ++s) {
      pbens::step(ens->state, *ens->bm, *ens->data, spec, threads <= 0 ? 1 : threads);
    }
  });
}

size_t pbens_ensemble_size(const pbens_ensemble* ens) {
  return ens ? static_cast<size_t>(ens->state.size()) : 0;
}

size_t pbens_ensemble_steps_taken(const pbens_ensemble* ens) {
  return ens ? static_cast<size_t>(ens->state.step) : 0;
}

pbens_status pbens_ensemble_particles(const pbens_ensemble* ens, double* out) {
  if (ens == nullptr || out == nullptr) return null_argument();
  for (const auto& p : ens->state.particles) {
    std::memcpy(out, p.data(), sizeof(double) * static_cast<size_t>(p.size()));
    out += p.size();
  }
  return PBENS_OK;
}

pbens_status pbens_ensemble_predict(const pbens_ensemble* ens, const double* inputs, size_t n,
                                    size_t d, double* out) {
  if (ens == nullptr || out == nullptr || (n > 0 && inputs == nullptr))
    return null_argument();
  return guarded([&] {
    pbens::require(static_cast<pbens::Index>(d) == ens->bm->model.input_dim(),
                   pbens::ErrorKind::Shape, "input dimension does not match the model");
    const pbens::Matrix preds =
        pbens::predict_particles(ens->bm->model, ens->state.particles, row_major(inputs, n, d));
    for (pbens::Index i = 0; i < preds.rows(); ++i)
      for (pbens::Index j = 0; j < preds.cols(); ++j) *out++ = preds(i, j);
  });
}

pbens_status pbens_ensemble_stationarity(const pbens_ensemble* ens, double* lhs, double* rhs,
                                         int* satisfied) {
  if (ens == nullptr) return null_argument();
  return guarded([&] {
    const auto rep = pbens::stationarity_monitor(ens->state, *ens->bm, *ens->data);
    if (lhs) *lhs = rep.lhs;
    if (rhs) *rhs = rep.rhs;
    if (satisfied) *satisfied = rep.satisfied ? 1 : 0;
  });
}

void pbens_ensemble_free(pbens_ensemble* ens) { delete ens; }

pbens_status pbens_experiment_list(char** out) {
  if (out == nullptr) return null_argument();
  *out = nullptr;
  return guarded([&] {
    std::string s;
    for (const auto& k : pbens::experiment_kinds()) s += k + "\n";
    *out = dup_string(s);
  });
}

pbens_status pbens_experiment_default_config(const char* kind, char** json_out) {
  if (kind == nullptr || json_out == nullptr) return null_argument();
  *json_out = nullptr;
  return guarded([&] { *json_out = dup_string(pbens::default_config(kind).dump(2) + "\n"); });
}

pbens_status pbens_experiment_resolve_config(const char* kind, const char* config_json,
                                             char** json_out) {
  if (kind == nullptr || json_out == nullptr) return null_argument();
  *json_out = nullptr;
  return guarded([&] {
    *json_out = dup_string(pbens::resolve_config(kind, parse_config(config_json)).dump(2) + "\n");
  });
}

pbens_status pbens_experiment_run(const char* kind, const char* config_json,
                                  const uint64_t* seed_override, int threads, const char* out_dir,
                                  char** results_json_out) {
  if (kind == nullptr) return null_argument();
  if (results_json_out) *results_json_out = nullptr;
  return guarded([&] {
    pbens::RunContext ctx;
    ctx.threads = threads;
    if (seed_override) ctx.seed = *seed_override;
    const auto out = pbens::run_experiment(kind, parse_config(config_json), ctx);
    if (out_dir != nullptr) pbens::write_outputs(out_dir, out);
    if (results_json_out) *results_json_out = dup_string(out.results.dump(2) + "\n");
  });
}

}  // extern "C"
