#ifndef PBENS_PBENS_H
#define PBENS_PBENS_H

#include <stddef.h>
#include <stdint.h>

#if defined(PBENS_BUILDING_LIBRARY)
#define PBENS_API __attribute__((visibility("default")))
#else
#define PBENS_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pbens_status {
  PBENS_OK = 0,
  PBENS_ERR_SHAPE = 1,
  PBENS_ERR_PARAMETER = 2,
  PBENS_ERR_NUMERIC = 3,
  PBENS_ERR_DIVERGENCE = 4,
  PBENS_ERR_PARSE = 5,
  PBENS_ERR_CONFIG = 6,
  PBENS_ERR_IO = 7,
  PBENS_ERR_NULL_ARGUMENT = 8,
  PBENS_ERR_INTERNAL = 9
} pbens_status;

/* Message for the most recent failing call on this thread ("" if none). */
PBENS_API const char* pbens_last_error(void);
PBENS_API const char* pbens_status_name(pbens_status status);
PBENS_API const char* pbens_version(void);

/* Strings returned through char** out-parameters are owned by the caller. */
PBENS_API void pbens_string_free(char* s);

/* ---- datasets */

typedef struct pbens_dataset pbens_dataset;

/* inputs is row-major n x d. */
PBENS_API pbens_status pbens_dataset_create(const double* inputs, const double* labels, size_t n,
                                            size_t d, pbens_dataset** out);
PBENS_API pbens_status pbens_dataset_load_csv(const char* path, pbens_dataset** out);
/* generator: toy_relu_24, trig_64, deep_demo or classif_2d. */
PBENS_API pbens_status pbens_dataset_synthetic(const char* generator, uint64_t seed,
                                               pbens_dataset** out);
PBENS_API size_t pbens_dataset_size(const pbens_dataset* data);
PBENS_API size_t pbens_dataset_dim(const pbens_dataset* data);
/* Copies row-major inputs (n*d values) and labels (n values); either may be NULL. */
PBENS_API pbens_status pbens_dataset_copy(const pbens_dataset* data, double* inputs,
                                          double* labels);
PBENS_API void pbens_dataset_free(pbens_dataset* data);

/* ---- models: architecture plus Gaussian likelihood and prior */

typedef struct pbens_model pbens_model;

/* widths = {input, hidden..., 1}. */
PBENS_API pbens_status pbens_model_relu_mlp(const size_t* widths, size_t n_widths, double sigma2,
                                            double alpha2_w, double alpha2_b, pbens_model** out);
/* Frequencies drawn from N(0, lengthscale^2) with the given seed. */
PBENS_API pbens_status pbens_model_linear_trig(size_t n_features, double lengthscale,
                                               uint64_t seed, double sigma2, double alpha2,
                                               pbens_model** out);
PBENS_API pbens_status pbens_model_toy_relu(double sigma2, double alpha2, pbens_model** out);
PBENS_API size_t pbens_model_num_params(const pbens_model* model);
PBENS_API pbens_status pbens_model_log_joint(const pbens_model* model, const pbens_dataset* data,
                                             const double* theta, double* out);
PBENS_API pbens_status pbens_model_grad_log_joint(const pbens_model* model,
                                                  const pbens_dataset* data, const double* theta,
                                                  double* grad_out);
PBENS_API void pbens_model_free(pbens_model* model);

/* ---- ensembles */

typedef enum pbens_optimizer_kind {
  PBENS_OPT_GD = 0,
  PBENS_OPT_ADAGRAD = 1,
  PBENS_OPT_LBFGS = 2
} pbens_optimizer_kind;

typedef struct pbens_optimizer {
  pbens_optimizer_kind kind;
  double step;
  double eps;         /* Adagrad */
  int history;        /* L-BFGS */
  int max_backtracks; /* L-BFGS */
} pbens_optimizer;

PBENS_API pbens_optimizer pbens_optimizer_default(pbens_optimizer_kind kind);

typedef struct pbens_ensemble pbens_ensemble;

/* The ensemble keeps its own copies of model and data. */
PBENS_API pbens_status pbens_ensemble_create(const pbens_model* model, const pbens_dataset* data,
                                             size_t k, uint64_t seed, pbens_ensemble** out);
PBENS_API pbens_status pbens_ensemble_step(pbens_ensemble* ens, const pbens_optimizer* opt,
                                           size_t n_steps, int threads);
PBENS_API size_t pbens_ensemble_size(const pbens_ensemble* ens);
PBENS_API size_t pbens_ensemble_steps_taken(const pbens_ensemble* ens);
/* Row-major k x num_params. */
PBENS_API pbens_status pbens_ensemble_particles(const pbens_ensemble* ens, double* out);
/* inputs row-major n x d; out row-major k x n. */
PBENS_API pbens_status pbens_ensemble_predict(const pbens_ensemble* ens, const double* inputs,
                                              size_t n, size_t d, double* out);
PBENS_API pbens_status pbens_ensemble_stationarity(const pbens_ensemble* ens, double* lhs,
                                                   double* rhs, int* satisfied);
PBENS_API void pbens_ensemble_free(pbens_ensemble* ens);

/* ---- experiments */

/* Newline-separated experiment names. */
PBENS_API pbens_status pbens_experiment_list(char** out);
PBENS_API pbens_status pbens_experiment_default_config(const char* kind, char** json_out);
/* Resolves config_json (NULL or "" for defaults) against the defaults. */
PBENS_API pbens_status pbens_experiment_resolve_config(const char* kind, const char* config_json,
                                                       char** json_out);
/* Runs an experiment and writes its files under out_dir (skipped if NULL).
   seed_override may be NULL. results_json_out may be NULL. */
PBENS_API pbens_status pbens_experiment_run(const char* kind, const char* config_json,
                                            const uint64_t* seed_override, int threads,
                                            const char* out_dir, char** results_json_out);

#ifdef __cplusplus
}
#endif

#endif
