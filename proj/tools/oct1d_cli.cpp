// Command-line front end. Talks to the library only through oct1d.h.
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "oct1d/oct1d.h"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

const std::vector<std::string> kModels = {"fcn",     "octfcn",      "resnet",   "octresnet",
                                          "lstmfcn", "lstm-octfcn", "alstmfcn", "alstm-octfcn"};

struct Failure {
  int code;
};

int exit_code(oct1d_status s) {
  return s == OCT1D_ERR_CONFIG || s == OCT1D_ERR_ARGUMENT ? kExitConfig : kExitRuntime;
}

void check(oct1d_status s, const char* what) {
  if (s == OCT1D_OK) return;
  std::cerr << "error: " << what << ": " << oct1d_last_error() << '\n';
  throw Failure{exit_code(s)};
}

template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
};

using Dataset = Handle<oct1d_dataset, oct1d_dataset_free>;
using TrainConfig = Handle<oct1d_train_config, oct1d_train_config_free>;
using Model = Handle<oct1d_model, oct1d_model_free>;

struct CString {
  char* p = nullptr;
  ~CString() { oct1d_string_free(p); }
};

// Options shared by commands that train models.
struct TrainArgs {
  std::string dataset;
  std::string model;
  std::string data_dir;
  double alpha = 0.5;
  std::size_t lstm_units = 8;
  std::uint64_t seed = 0;
  std::optional<std::size_t> epochs, batch_size, lr_patience;
  std::optional<double> learning_rate;
  std::optional<std::string> precision;
};

void add_train_options(CLI::App* cmd, TrainArgs& a) {
  cmd->add_option("--dataset", a.dataset, "synth:<kind>:<n>:<Q>:<seed>[:<noise>] or a dataset name")->required();
  cmd->add_option("--model", a.model, "Architecture")->required()->check(CLI::IsMember(kModels));
  cmd->add_option("--data-dir", a.data_dir, "Dataset cache root (default $OCT1D_DATA_DIR or ./data)")
      ->check(CLI::ExistingDirectory);
  cmd->add_option("--alpha", a.alpha, "Low-frequency channel ratio")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--lstm-units", a.lstm_units, "LSTM hidden units")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", a.seed, "Base seed");
  cmd->add_option("--epochs", a.epochs, "Training epochs (profile default)");
  cmd->add_option("--batch-size", a.batch_size, "Mini-batch size");
  cmd->add_option("--lr", a.learning_rate, "Initial learning rate");
  cmd->add_option("--lr-patience", a.lr_patience, "Epochs without improvement before decay");
  cmd->add_option("--precision", a.precision, "Kernel precision")->check(CLI::IsMember({"double", "single"}));
}

void load_dataset(const TrainArgs& a, Dataset& ds) {
  check(oct1d_dataset_load(a.dataset.c_str(), a.data_dir.empty() ? nullptr : a.data_dir.c_str(), &ds.p),
        "--dataset");
}

void build_train_config(const TrainArgs& a, const std::string& profile, TrainConfig& cfg) {
  check(oct1d_train_config_new(profile.c_str(), &cfg.p), "--profile");
  auto set = [&](const char* key, const std::string& value, const char* flag) {
    check(oct1d_train_config_set(cfg.p, key, value.c_str()), flag);
  };
  if (a.epochs) set("epochs", std::to_string(*a.epochs), "--epochs");
  if (a.batch_size) set("batch_size", std::to_string(*a.batch_size), "--batch-size");
  if (a.lr_patience) set("lr_patience", std::to_string(*a.lr_patience), "--lr-patience");
  if (a.learning_rate) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", *a.learning_rate);
    set("learning_rate", buf, "--lr");
  }
  if (a.precision) set("precision", *a.precision, "--precision");
}

oct1d_model_spec model_spec(const TrainArgs& a, const Dataset& ds) {
  oct1d_model_spec spec;
  oct1d_model_spec_init(&spec);
  spec.architecture = a.model.c_str();
  spec.num_classes = oct1d_dataset_num_classes(ds.p);
  spec.input_length = oct1d_dataset_length(ds.p);
  spec.alpha = a.alpha;
  spec.lstm_units = a.lstm_units;
  spec.seed = a.seed;
  return spec;
}

// Reads `key = value` lines; '#' starts a comment.
std::vector<std::string> config_args(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw CLI::FileError::Missing(path);
  std::vector<std::string> out;
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto ws = " \t\r";
    s.erase(s.find_last_not_of(ws) + 1);
    s.erase(0, s.find_first_not_of(ws));
    return s;
  };
  while (std::getline(is, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw CLI::ConversionError(path + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    for (auto& c : key)
      if (c == '_') c = '-';
    out.push_back("--" + key + "=" + trim(line.substr(eq + 1)));
  }
  return out;
}

// Moves `--config FILE` out of argv and splices the file's settings in
// right after the subcommand, so that later command-line flags win.
std::vector<std::string> expand_config(int argc, char** argv, const std::vector<std::string>& commands) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::optional<std::string> path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      args.erase(args.begin() + i, args.begin() + i + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + i);
      break;
    }
  }
  if (!path) return args;
  auto extra = config_args(*path);
  auto cmd = std::find_first_of(args.begin(), args.end(), commands.begin(), commands.end());
  if (cmd == args.end()) throw CLI::ValidationError("--config", "a subcommand is required");
  // Profile is a top-level option; keep it ahead of the subcommand.
  std::vector<std::string> top;
  std::erase_if(extra, [&](const std::string& s) {
    if (s.rfind("--profile=", 0) == 0) {
      top.push_back(s);
      return true;
    }
    return false;
  });
  const auto pos = cmd - args.begin();
  args.insert(args.begin() + pos + 1, extra.begin(), extra.end());
  args.insert(args.begin() + pos, top.begin(), top.end());
  return args;
}

void print_record(const oct1d_run_record* r, void*) {
  std::printf("%s %s run %zu seed %llu accuracy %.4f epochs %zu (%.1fs)\n", r->dataset, r->model, r->run,
              static_cast<unsigned long long>(r->seed), r->accuracy, r->epochs, r->seconds);
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"OctConv time series classification toolkit"};
  app.name("oct1d");
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  std::string profile = "desk";
  std::string config_path;
  app.add_option("--config", config_path, "key = value file; command-line flags override it");
  app.add_option("--profile", profile, "Preset for epochs and precision")->check(CLI::IsMember({"desk", "paper"}));

  TrainArgs train_args;
  std::optional<std::size_t> runs;
  std::size_t jobs = 1;
  std::string results_dir = "results";
  auto* train = app.add_subcommand("train", "Multi-seed training and evaluation");
  add_train_options(train, train_args);
  train->add_option("--runs", runs, "Independent runs (desk 5, paper 20)")->check(CLI::PositiveNumber);
  train->add_option("--jobs", jobs, "Parallel runs")->check(CLI::PositiveNumber);
  train->add_option("--out", results_dir, "Results directory");

  std::string results_csv = "results/runs.csv";
  std::string external_csv;
  std::vector<std::string> models;
  std::string metric = "mean";
  std::string reports_dir = "reports";
  auto* compare = app.add_subcommand("compare", "Wilcoxon signed-rank comparison and CD diagram");
  compare->add_option("--results", results_csv, "runs.csv of a results directory")->check(CLI::ExistingFile);
  compare->add_option("--external", external_csv, "Literature accuracies (model,dataset,accuracy)")
      ->check(CLI::ExistingFile);
  compare->add_option("--models", models, "Models to compare (default: all)")->delimiter(',');
  compare->add_option("--metric", metric, "Per-dataset aggregate")->check(CLI::IsMember({"mean", "max"}));
  compare->add_option("--out", reports_dir, "Report directory");

  std::uint64_t gc_seed = 0;
  std::size_t gc_shapes = 5;
  std::string gc_fault;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks for every layer family");
  gradcheck->add_option("--seed", gc_seed, "Random shape seed");
  gradcheck->add_option("--shapes", gc_shapes, "Random shapes per family")->check(CLI::PositiveNumber);
  gradcheck->add_option("--fault", gc_fault, "Corrupt one backward rule (mutation check)")->group("");

  TrainArgs ablate_args;
  oct1d_ablation_options ablation;
  oct1d_ablation_options_init(&ablation);
  std::string ablation_dir = "ablation";
  auto* ablate = app.add_subcommand("ablate", "Train once, then probe GAP features and filter activations");
  add_train_options(ablate, ablate_args);
  ablate->add_option("--filters", ablation.filters_per_layer, "Filters plotted per layer");
  ablate->add_option("--svm-c", ablation.c, "Linear classifier C")->check(CLI::PositiveNumber);
  ablate->add_option("--svm-epochs", ablation.svm_epochs, "Linear classifier epochs")->check(CLI::PositiveNumber);
  ablate->add_option("--out", ablation_dir, "Output root");

  try {
    auto args = expand_config(argc, argv, {"train", "compare", "gradcheck", "ablate"});
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train) {
      Dataset ds;
      TrainConfig cfg;
      load_dataset(train_args, ds);
      build_train_config(train_args, profile, cfg);
      const auto spec = model_spec(train_args, ds);
      oct1d_multi_run_options mo;
      oct1d_multi_run_options_init(&mo);
      mo.runs = runs.value_or(profile == "paper" ? 20 : 5);
      mo.base_seed = train_args.seed;
      mo.jobs = jobs;
      mo.results_dir = results_dir.c_str();
      mo.on_record = print_record;
      oct1d_multi_run_summary summary{};
      const auto st = oct1d_multi_run(&spec, ds.p, cfg.p, &mo, &summary);
      if (summary.completed)
        std::printf("%s %s: %zu runs, mean accuracy %.4f, max %.4f\n", oct1d_dataset_name(ds.p),
                    train_args.model.c_str(), summary.completed, summary.mean, summary.max);
      check(st, "train");
    } else if (*compare) {
      std::vector<const char*> names;
      for (const auto& m : models) names.push_back(m.c_str());
      CString summary;
      check(oct1d_compare(results_csv.c_str(), external_csv.empty() ? nullptr : external_csv.c_str(),
                          names.empty() ? nullptr : names.data(), names.size(), metric.c_str(),
                          reports_dir.c_str(), &summary.p),
            "compare");
      std::printf("%s\n", summary.p);
    } else if (*gradcheck) {
      CString report;
      int passed = 0;
      check(oct1d_gradcheck(gc_seed, gc_shapes, gc_fault.empty() ? nullptr : gc_fault.c_str(), &report.p, &passed),
            "gradcheck");
      std::printf("%s", report.p);
      std::printf("%s\n", passed ? "all families passed" : "gradient check FAILED");
      return passed ? 0 : kExitRuntime;
    } else if (*ablate) {
      Dataset ds;
      TrainConfig cfg;
      Model model;
      load_dataset(ablate_args, ds);
      build_train_config(ablate_args, profile, cfg);
      check(oct1d_train_config_set(cfg.p, "seed", std::to_string(ablate_args.seed).c_str()), "--seed");
      const auto spec = model_spec(ablate_args, ds);
      check(oct1d_model_new(&spec, &model.p), "--model");
      check(oct1d_model_train(model.p, ds.p, cfg.p, nullptr), "ablate");
      ablation.seed = ablate_args.seed;
      const std::string out = ablation_dir + "/" + oct1d_dataset_name(ds.p) + "/" + ablate_args.model;
      CString report;
      check(oct1d_ablate(model.p, ds.p, out.c_str(), &ablation, &report.p), "ablate");
      std::printf("%s\n", report.p);
    }
  } catch (const Failure& f) {
    return f.code;
  }
  return 0;
}
