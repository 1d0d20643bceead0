/* C interface to the oct1d library. Every fallible call returns an
 * oct1d_status; on failure oct1d_last_error() describes the most recent error
 * on the calling thread. Handles are opaque and released with their _free
 * function. Strings returned through char** are released with
 * oct1d_string_free. */
#ifndef OCT1D_OCT1D_H
#define OCT1D_OCT1D_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define OCT1D_API __declspec(dllexport)
#else
#define OCT1D_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum oct1d_status {
  OCT1D_OK = 0,
  OCT1D_ERR_ARGUMENT = 1, /* null handle or malformed argument */
  OCT1D_ERR_CONFIG = 2,
  OCT1D_ERR_DIMENSION = 3,
  OCT1D_ERR_DEGENERATE_LENGTH = 4,
  OCT1D_ERR_LABEL_RANGE = 5,
  OCT1D_ERR_CONTRACT = 6,
  OCT1D_ERR_NON_FINITE = 7,
  OCT1D_ERR_PARSE = 8,
  OCT1D_ERR_INPUT = 9,
  OCT1D_ERR_IO = 10,
  OCT1D_ERR_RUNTIME = 11,
  OCT1D_ERR_INTERNAL = 12
} oct1d_status;

OCT1D_API const char* oct1d_version(void);
OCT1D_API const char* oct1d_status_name(oct1d_status status);
/* Message of the last failed call on this thread; empty if none. */
OCT1D_API const char* oct1d_last_error(void);
OCT1D_API void oct1d_string_free(char* s);

/* Datasets */
typedef struct oct1d_dataset oct1d_dataset;

/* uri: "synth:<kind>:<n>:<Q>:<seed>[:<noise>]" or a dataset name resolved
 * under data_dir (NULL: $OCT1D_DATA_DIR, else "data"). */
OCT1D_API oct1d_status oct1d_dataset_load(const char* uri, const char* data_dir, oct1d_dataset** out);
OCT1D_API oct1d_status oct1d_dataset_load_tsv(const char* train_path, const char* test_path,
                                              const char* name, oct1d_dataset** out);
OCT1D_API void oct1d_dataset_free(oct1d_dataset* ds);
OCT1D_API const char* oct1d_dataset_name(const oct1d_dataset* ds);
OCT1D_API size_t oct1d_dataset_length(const oct1d_dataset* ds);
OCT1D_API size_t oct1d_dataset_num_classes(const oct1d_dataset* ds);
/* split: 0 train, 1 test */
OCT1D_API size_t oct1d_dataset_size(const oct1d_dataset* ds, int split);

/* Training configuration */
typedef struct oct1d_train_config oct1d_train_config;

/* profile: "desk" or "paper" */
OCT1D_API oct1d_status oct1d_train_config_new(const char* profile, oct1d_train_config** out);
/* Keys: epochs, batch_size, learning_rate, lr_decay_factor, lr_patience,
 * min_learning_rate, precision (double|single), seed. */
OCT1D_API oct1d_status oct1d_train_config_set(oct1d_train_config* cfg, const char* key, const char* value);
OCT1D_API void oct1d_train_config_free(oct1d_train_config* cfg);

/* Models */
typedef struct oct1d_model_spec {
  const char* architecture; /* fcn, octfcn, resnet, octresnet, lstmfcn, lstm-octfcn, alstmfcn, alstm-octfcn */
  size_t num_classes;
  size_t input_length;
  double alpha;
  size_t lstm_units;
  double dropout;
  uint64_t seed;
} oct1d_model_spec;

OCT1D_API void oct1d_model_spec_init(oct1d_model_spec* spec);

typedef struct oct1d_model oct1d_model;

OCT1D_API oct1d_status oct1d_model_new(const oct1d_model_spec* spec, oct1d_model** out);
OCT1D_API void oct1d_model_free(oct1d_model* model);
OCT1D_API size_t oct1d_model_param_count(const oct1d_model* model);
OCT1D_API oct1d_status oct1d_model_train(oct1d_model* model, const oct1d_dataset* ds,
                                         const oct1d_train_config* cfg, size_t* epochs_run);
OCT1D_API oct1d_status oct1d_model_evaluate(const oct1d_model* model, const oct1d_dataset* ds, int split,
                                            double* accuracy);
/* x holds n series of length q; out receives n * num_classes probabilities. */
OCT1D_API oct1d_status oct1d_model_predict_proba(const oct1d_model* model, const double* x, size_t n, size_t q,
                                                 double* out);
OCT1D_API oct1d_status oct1d_model_save(const oct1d_model* model, const char* path);
OCT1D_API oct1d_status oct1d_model_load(oct1d_model* model, const char* path);

/* Multi-seed runs */
typedef struct oct1d_run_record {
  const char* dataset;
  const char* model;
  size_t run;
  uint64_t seed;
  double accuracy;
  size_t params;
  size_t epochs;
  double seconds;
} oct1d_run_record;

typedef void (*oct1d_record_callback)(const oct1d_run_record* record, void* user);

typedef struct oct1d_multi_run_options {
  size_t runs;
  uint64_t base_seed;
  size_t jobs;
  const char* results_dir; /* NULL: nothing persisted */
  oct1d_record_callback on_record;
  void* user;
} oct1d_multi_run_options;

typedef struct oct1d_multi_run_summary {
  size_t completed;
  size_t failed;
  double mean;
  double max;
} oct1d_multi_run_summary;

OCT1D_API void oct1d_multi_run_options_init(oct1d_multi_run_options* options);
/* Returns OCT1D_ERR_RUNTIME when some runs failed; the summary then covers
 * the completed ones and the error message lists the failures. */
OCT1D_API oct1d_status oct1d_multi_run(const oct1d_model_spec* spec, const oct1d_dataset* ds,
                                       const oct1d_train_config* cfg, const oct1d_multi_run_options* options,
                                       oct1d_multi_run_summary* summary);

/* Comparison: Wilcoxon reports and a CD diagram written into out_dir.
 * models may be NULL (all models in the CSV). external_csv may be NULL.
 * metric: "mean" or "max". summary_json may be NULL. */
OCT1D_API oct1d_status oct1d_compare(const char* runs_csv, const char* external_csv, const char* const* models,
                                     size_t n_models, const char* metric, const char* out_dir, char** summary_json);

/* Gradient checks. fault_family, if not NULL, corrupts that backward rule for
 * the duration of the call. */
OCT1D_API oct1d_status oct1d_gradcheck(uint64_t seed, size_t shapes, const char* fault_family, char** report,
                                       int* all_passed);

/* Ablation on a trained model */
typedef struct oct1d_ablation_options {
  size_t filters_per_layer;
  double c;
  size_t svm_epochs;
  double svm_learning_rate;
  uint64_t seed;
} oct1d_ablation_options;

OCT1D_API void oct1d_ablation_options_init(oct1d_ablation_options* options);
OCT1D_API oct1d_status oct1d_ablate(const oct1d_model* model, const oct1d_dataset* ds, const char* out_dir,
                                    const oct1d_ablation_options* options, char** report_json);

#ifdef __cplusplus
}
#endif

#endif
