#include "oct1d/oct1d.h"

#include <cstdlib>
#include <cstring>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "oct1d/ablation.hpp"
#include "oct1d/dataset.hpp"
#include "oct1d/gradcheck.hpp"
#include "oct1d/model.hpp"
#include "oct1d/snapshot.hpp"
#include "oct1d/stats.hpp"
#include "oct1d/training.hpp"

struct oct1d_dataset {
  oct1d::SeriesDataset data;
};

struct oct1d_train_config {
  oct1d::TrainConfig config;
};

struct oct1d_model {
  explicit oct1d_model(const oct1d::ModelConfig& c) : model(c) {}
  oct1d::Model model;
};

namespace {

thread_local std::string last_error;

oct1d_status status_of(oct1d::ErrorKind kind) {
  using oct1d::ErrorKind;
  switch (kind) {
    case ErrorKind::Dimension: return OCT1D_ERR_DIMENSION;
    case ErrorKind::DegenerateLength: return OCT1D_ERR_DEGENERATE_LENGTH;
    case ErrorKind::LabelRange: return OCT1D_ERR_LABEL_RANGE;
    case ErrorKind::Contract: return OCT1D_ERR_CONTRACT;
    case ErrorKind::NonFinite: return OCT1D_ERR_NON_FINITE;
    case ErrorKind::Config: return OCT1D_ERR_CONFIG;
    case ErrorKind::Parse: return OCT1D_ERR_PARSE;
    case ErrorKind::Input: return OCT1D_ERR_INPUT;
    case ErrorKind::Io: return OCT1D_ERR_IO;
    case ErrorKind::Runtime: return OCT1D_ERR_RUNTIME;
  }
  return OCT1D_ERR_INTERNAL;
}

oct1d_status set_error(oct1d_status s, std::string msg) {
  last_error = std::move(msg);
  return s;
}

template <class F>
oct1d_status guarded(F&& f) {
  try {
    last_error.clear();
    return f();
  } catch (const oct1d::Error& e) {
    return set_error(status_of(e.kind()), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return set_error(OCT1D_ERR_IO, e.what());
  } catch (const std::bad_alloc&) {
    return set_error(OCT1D_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(OCT1D_ERR_INTERNAL, e.what());
  }
}

#define OCT1D_REQUIRE(cond, what) \
  if (!(cond)) return set_error(OCT1D_ERR_ARGUMENT, what)

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

oct1d::ModelConfig model_config(const oct1d_model_spec& spec) {
  if (!spec.architecture) oct1d::fail(oct1d::ErrorKind::Config, "model: architecture is required");
  auto arch = oct1d::parse_architecture(spec.architecture);
  if (!arch) oct1d::fail(oct1d::ErrorKind::Config, std::string("model: unknown architecture '") + spec.architecture + "'");
  oct1d::ModelConfig c;
  c.architecture = *arch;
  c.num_classes = spec.num_classes;
  c.input_length = spec.input_length;
  c.alpha = spec.alpha;
  c.lstm_units = spec.lstm_units;
  c.dropout = spec.dropout;
  c.seed = spec.seed;
  return c;
}

const oct1d::SeriesSplit& split_of(const oct1d_dataset* ds, int split) {
  if (split != 0 && split != 1) oct1d::fail(oct1d::ErrorKind::Config, "split must be 0 (train) or 1 (test)");
  return split == 0 ? ds->data.train : ds->data.test;
}

template <class T>
T parse_value(const char* key, const char* value) {
  std::istringstream is(value);
  T out{};
  if constexpr (std::is_unsigned_v<T>) {
    if (std::string(value).find('-') != std::string::npos)
      oct1d::fail(oct1d::ErrorKind::Config, std::string(key) + ": expected a non-negative integer, got '" + value + "'");
  }
  is >> out;
  if (!is || !is.eof())
    oct1d::fail(oct1d::ErrorKind::Config, std::string(key) + ": cannot parse '" + value + "'");
  return out;
}

}  // namespace

extern "C" {

const char* oct1d_version(void) { return "1.0.0"; }

const char* oct1d_status_name(oct1d_status s) {
  switch (s) {
    case OCT1D_OK: return "ok";
    case OCT1D_ERR_ARGUMENT: return "argument";
    case OCT1D_ERR_CONFIG: return "config";
    case OCT1D_ERR_DIMENSION: return "dimension";
    case OCT1D_ERR_DEGENERATE_LENGTH: return "degenerate_length";
    case OCT1D_ERR_LABEL_RANGE: return "label_range";
    case OCT1D_ERR_CONTRACT: return "contract";
    case OCT1D_ERR_NON_FINITE: return "non_finite";
    case OCT1D_ERR_PARSE: return "parse";
    case OCT1D_ERR_INPUT: return "input";
    case OCT1D_ERR_IO: return "io";
    case OCT1D_ERR_RUNTIME: return "runtime";
    case OCT1D_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* oct1d_last_error(void) { return last_error.c_str(); }

void oct1d_string_free(char* s) { std::free(s); }

oct1d_status oct1d_dataset_load(const char* uri, const char* data_dir, oct1d_dataset** out) {
  OCT1D_REQUIRE(uri && out, "dataset_load: uri and out are required");
  return guarded([&] {
    const auto dir = data_dir ? std::filesystem::path(data_dir) : oct1d::default_data_dir();
    *out = new oct1d_dataset{oct1d::load_dataset(uri, dir)};
    return OCT1D_OK;
  });
}

oct1d_status oct1d_dataset_load_tsv(const char* train_path, const char* test_path, const char* name,
                                    oct1d_dataset** out) {
  OCT1D_REQUIRE(train_path && test_path && out, "dataset_load_tsv: paths and out are required");
  return guarded([&] {
    *out = new oct1d_dataset{oct1d::load_ucr_tsv(train_path, test_path, name ? name : "")};
    return OCT1D_OK;
  });
}

void oct1d_dataset_free(oct1d_dataset* ds) { delete ds; }
const char* oct1d_dataset_name(const oct1d_dataset* ds) { return ds ? ds->data.name.c_str() : ""; }
size_t oct1d_dataset_length(const oct1d_dataset* ds) { return ds ? ds->data.length() : 0; }
size_t oct1d_dataset_num_classes(const oct1d_dataset* ds) { return ds ? ds->data.num_classes() : 0; }
size_t oct1d_dataset_size(const oct1d_dataset* ds, int split) {
  if (!ds || (split != 0 && split != 1)) return 0;
  return (split == 0 ? ds->data.train : ds->data.test).size();
}

oct1d_status oct1d_train_config_new(const char* profile, oct1d_train_config** out) {
  OCT1D_REQUIRE(out, "train_config_new: out is required");
  return guarded([&] {
    const std::string p = profile ? profile : "desk";
    if (p == "desk") *out = new oct1d_train_config{oct1d::TrainConfig::desk()};
    else if (p == "paper") *out = new oct1d_train_config{oct1d::TrainConfig::paper()};
    else oct1d::fail(oct1d::ErrorKind::Config, "profile: expected desk or paper, got '" + p + "'");
    return OCT1D_OK;
  });
}

oct1d_status oct1d_train_config_set(oct1d_train_config* cfg, const char* key, const char* value) {
  OCT1D_REQUIRE(cfg && key && value, "train_config_set: config, key and value are required");
  return guarded([&] {
    auto& c = cfg->config;
    const std::string k = key;
    if (k == "epochs") c.epochs = parse_value<std::size_t>(key, value);
    else if (k == "batch_size") c.batch_size = parse_value<std::size_t>(key, value);
    else if (k == "learning_rate") c.learning_rate = parse_value<double>(key, value);
    else if (k == "lr_decay_factor") c.lr_decay_factor = parse_value<double>(key, value);
    else if (k == "lr_patience") c.lr_patience = parse_value<std::size_t>(key, value);
    else if (k == "min_learning_rate") c.min_learning_rate = parse_value<double>(key, value);
    else if (k == "seed") c.seed = parse_value<std::uint64_t>(key, value);
    else if (k == "precision") {
      const std::string v = value;
      if (v == "double") c.precision = oct1d::Precision::Double;
      else if (v == "single") c.precision = oct1d::Precision::Single;
      else oct1d::fail(oct1d::ErrorKind::Config, "precision: expected double or single, got '" + v + "'");
    } else {
      oct1d::fail(oct1d::ErrorKind::Config, "unknown training option '" + k + "'");
    }
    c.validate();
    return OCT1D_OK;
  });
}

void oct1d_train_config_free(oct1d_train_config* cfg) { delete cfg; }

void oct1d_model_spec_init(oct1d_model_spec* spec) {
  if (!spec) return;
  const oct1d::ModelConfig d;
  *spec = oct1d_model_spec{"fcn", d.num_classes, d.input_length, d.alpha, d.lstm_units, d.dropout, d.seed};
}

oct1d_status oct1d_model_new(const oct1d_model_spec* spec, oct1d_model** out) {
  OCT1D_REQUIRE(spec && out, "model_new: spec and out are required");
  return guarded([&] {
    *out = new oct1d_model(model_config(*spec));
    return OCT1D_OK;
  });
}

void oct1d_model_free(oct1d_model* model) { delete model; }

size_t oct1d_model_param_count(const oct1d_model* model) { return model ? model->model.param_count() : 0; }

oct1d_status oct1d_model_train(oct1d_model* model, const oct1d_dataset* ds, const oct1d_train_config* cfg,
                               size_t* epochs_run) {
  OCT1D_REQUIRE(model && ds && cfg, "model_train: model, dataset and config are required");
  return guarded([&] {
    const auto h = oct1d::train(model->model, ds->data.train, cfg->config);
    if (epochs_run) *epochs_run = h.epochs_run;
    return OCT1D_OK;
  });
}

oct1d_status oct1d_model_evaluate(const oct1d_model* model, const oct1d_dataset* ds, int split, double* accuracy) {
  OCT1D_REQUIRE(model && ds && accuracy, "model_evaluate: model, dataset and accuracy are required");
  OCT1D_REQUIRE(split == 0 || split == 1, "model_evaluate: split must be 0 (train) or 1 (test)");
  return guarded([&] {
    *accuracy = oct1d::evaluate(model->model, split_of(ds, split));
    return OCT1D_OK;
  });
}

oct1d_status oct1d_model_predict_proba(const oct1d_model* model, const double* x, size_t n, size_t q,
                                       double* out) {
  OCT1D_REQUIRE(model && x && out, "model_predict_proba: model, x and out are required");
  return guarded([&] {
    const oct1d::Tensor p = oct1d::predict_proba(model->model, oct1d::Tensor({n, q, 1}, std::vector<double>(x, x + n * q)));
    std::copy(p.data().begin(), p.data().end(), out);
    return OCT1D_OK;
  });
}

oct1d_status oct1d_model_save(const oct1d_model* model, const char* path) {
  OCT1D_REQUIRE(model && path, "model_save: model and path are required");
  return guarded([&] {
    oct1d::save_parameters(model->model.parameters(), path);
    return OCT1D_OK;
  });
}

oct1d_status oct1d_model_load(oct1d_model* model, const char* path) {
  OCT1D_REQUIRE(model && path, "model_load: model and path are required");
  return guarded([&] {
    oct1d::load_parameters(model->model.parameters(), path);
    return OCT1D_OK;
  });
}

void oct1d_multi_run_options_init(oct1d_multi_run_options* o) {
  if (o) *o = oct1d_multi_run_options{20, 0, 1, nullptr, nullptr, nullptr};
}

oct1d_status oct1d_multi_run(const oct1d_model_spec* spec, const oct1d_dataset* ds, const oct1d_train_config* cfg,
                             const oct1d_multi_run_options* options, oct1d_multi_run_summary* summary) {
  OCT1D_REQUIRE(spec && ds && cfg && options, "multi_run: spec, dataset, config and options are required");
  return guarded([&] {
    std::optional<oct1d::ResultsStore> store;
    if (options->results_dir) store.emplace(options->results_dir);
    oct1d::MultiRunOptions mo;
    mo.runs = options->runs;
    mo.base_seed = options->base_seed;
    mo.jobs = options->jobs;
    mo.store = store ? &*store : nullptr;
    if (options->on_record) {
      mo.on_record = [cb = options->on_record, user = options->user](const oct1d::RunRecord& r) {
        const oct1d_run_record c{r.dataset.c_str(), r.model.c_str(), r.run,    r.seed,
                                 r.accuracy,       r.params,        r.epochs, r.seconds};
        cb(&c, user);
      };
    }
    const auto res = oct1d::multi_run(model_config(*spec), ds->data, cfg->config, mo);
    if (summary) *summary = oct1d_multi_run_summary{res.records.size(), res.failures.size(), res.mean, res.max};
    if (!res.failures.empty()) {
      std::string msg = std::to_string(res.failures.size()) + " of " + std::to_string(options->runs) + " runs failed";
      for (const auto& f : res.failures) msg += "\n  run " + std::to_string(f.run) + ": " + f.message;
      return set_error(OCT1D_ERR_RUNTIME, msg);
    }
    return OCT1D_OK;
  });
}

oct1d_status oct1d_compare(const char* runs_csv, const char* external_csv, const char* const* models,
                           size_t n_models, const char* metric, const char* out_dir, char** summary_json) {
  OCT1D_REQUIRE(runs_csv && out_dir, "compare: runs_csv and out_dir are required");
  OCT1D_REQUIRE(!n_models || models, "compare: models is NULL but n_models > 0");
  return guarded([&] {
    const auto m = oct1d::parse_metric(metric ? metric : "mean");
    if (!m) oct1d::fail(oct1d::ErrorKind::Config, std::string("metric: expected mean or max, got '") + metric + "'");
    auto records = oct1d::read_runs_csv(runs_csv);
    if (external_csv) {
      auto ext = oct1d::read_external_csv(external_csv);
      records.insert(records.end(), ext.begin(), ext.end());
    }
    std::vector<std::string> names;
    for (size_t i = 0; i < n_models; ++i) names.emplace_back(models[i]);
    const auto out = oct1d::compare_results(records, names, *m, out_dir);
    if (summary_json) {
      nlohmann::ordered_json j;
      j["metric"] = metric ? metric : "mean";
      j["models"] = out.table.models;
      j["datasets"] = out.table.datasets;
      j["average_ranks"] = out.diagram.ranks;
      auto& pairs = j["pairs"] = nlohmann::ordered_json::array();
      for (const auto& r : out.reports) pairs.push_back(nlohmann::ordered_json::parse(oct1d::report_json(r)));
      auto& cliques = j["cliques"] = nlohmann::ordered_json::array();
      for (const auto& c : out.diagram.cliques) {
        std::vector<std::string> members;
        for (auto i : c) members.push_back(out.diagram.models[i]);
        cliques.push_back(members);
      }
      *summary_json = dup_string(j.dump(2));
    }
    return OCT1D_OK;
  });
}

oct1d_status oct1d_gradcheck(uint64_t seed, size_t shapes, const char* fault_family, char** report, int* all_passed) {
  return guarded([&] {
    struct FaultGuard {
      explicit FaultGuard(const char* f) { if (f) oct1d::debug::set_backward_fault(f); }
      ~FaultGuard() { oct1d::debug::set_backward_fault(""); }
    } guard(fault_family);
    oct1d::GradCheckOptions opt;
    opt.seed = seed;
    opt.shapes = shapes;
    const auto results = oct1d::run_gradcheck(opt);
    bool ok = true;
    for (const auto& r : results) ok = ok && r.passed;
    if (all_passed) *all_passed = ok ? 1 : 0;
    if (report) *report = dup_string(oct1d::gradcheck_report(results));
    return OCT1D_OK;
  });
}

void oct1d_ablation_options_init(oct1d_ablation_options* o) {
  if (!o) return;
  const oct1d::SvmConfig s;
  *o = oct1d_ablation_options{8, s.c, s.epochs, s.learning_rate, s.seed};
}

oct1d_status oct1d_ablate(const oct1d_model* model, const oct1d_dataset* ds, const char* out_dir,
                          const oct1d_ablation_options* options, char** report_json) {
  OCT1D_REQUIRE(model && ds && out_dir && options, "ablate: model, dataset, out_dir and options are required");
  return guarded([&] {
    oct1d::SvmConfig svm;
    svm.c = options->c;
    svm.epochs = options->svm_epochs;
    svm.learning_rate = options->svm_learning_rate;
    svm.seed = options->seed;
    std::vector<std::string> warnings;
    const auto rep = oct1d::run_ablation(model->model, ds->data, out_dir, options->filters_per_layer, svm, &warnings);
    if (report_json) {
      nlohmann::ordered_json j;
      j["dataset"] = rep.dataset;
      j["model"] = rep.model;
      j["feature_width"] = rep.feature_width;
      j["feature_accuracy"] = rep.feature_accuracy;
      j["raw_accuracy"] = rep.raw_accuracy;
      j["warnings"] = warnings;
      *report_json = dup_string(j.dump(2));
    }
    return OCT1D_OK;
  });
}

}  // extern "C"
