#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "oct1d/dataset.hpp"
#include "oct1d/model.hpp"

namespace oct1d {

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  // Plateau schedule on the epoch training loss.
  double lr_decay_factor = 0.7071;
  std::size_t lr_patience = 50;
  double min_learning_rate = 1e-4;
  // Adam
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
  Precision precision = Precision::Double;

  /// 200 epochs, double precision.
  static TrainConfig desk();
  /// 500 epochs, single-precision kernels.
  static TrainConfig paper();

  void validate() const;
};

struct TrainHistory {
  std::vector<double> epoch_loss;
  std::vector<double> learning_rate;
  std::size_t best_epoch = 0;  // 1-based epoch whose parameters were kept
  std::size_t epochs_run = 0;
};

/// Minimizes mean softmax cross-entropy with Adam over shuffled mini-batches.
/// On return the model holds the parameters of the epoch with the lowest
/// training loss. Deterministic for a fixed config.seed. A non-finite loss
/// aborts with ErrorKind::Runtime naming the epoch.
TrainHistory train(Model& model, const SeriesSplit& data, const TrainConfig& config);

/// Argmax predictions; ties resolve to the lowest class index.
std::vector<std::size_t> predict(const Model& model, const Tensor& x);
std::size_t argmax_row(const Tensor& scores, std::size_t row);
double accuracy(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& labels);
double evaluate(const Model& model, const SeriesSplit& split);

struct RunRecord {
  std::string dataset;
  std::string model;
  std::size_t run = 0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  std::size_t params = 0;
  std::size_t epochs = 0;
  double seconds = 0.0;
};

/// Everything in a RunRecord except wall time.
bool same_outcome(const RunRecord& a, const RunRecord& b);

/// Append-only `runs.csv` plus per-(dataset, model) JSON aggregates under a
/// results directory. Appends are serialized across threads.
class ResultsStore {
 public:
  static constexpr const char* kHeader = "dataset,model,run,seed,accuracy,params,epochs,seconds";

  explicit ResultsStore(std::filesystem::path dir);

  const std::filesystem::path& dir() const noexcept { return dir_; }
  std::filesystem::path runs_csv() const { return dir_ / "runs.csv"; }

  void append(const RunRecord& record);
  void write_aggregate(const std::string& dataset, const std::string& model,
                       const std::vector<RunRecord>& records, bool incomplete);

 private:
  std::filesystem::path dir_;
  std::mutex mutex_;
};

std::vector<RunRecord> read_runs_csv(const std::filesystem::path& path);

struct RunFailure {
  std::size_t run = 0;
  std::string message;
};

struct MultiRunResult {
  std::vector<RunRecord> records;  // completed runs, by run index
  std::vector<RunFailure> failures;
  double mean = 0.0;
  double max = 0.0;
  bool incomplete = false;  // some runs failed; aggregates cover the rest
};

struct MultiRunOptions {
  std::size_t runs = 20;
  std::uint64_t base_seed = 0;
  std::size_t jobs = 1;
  ResultsStore* store = nullptr;
  /// Called after each finished run (from worker threads, serialized).
  std::function<void(const RunRecord&)> on_record;
};

/// Trains `options.runs` independent models with seeds base_seed + run and
/// evaluates each on the test split.
MultiRunResult multi_run(const ModelConfig& model, const SeriesDataset& data,
                         const TrainConfig& train_config, const MultiRunOptions& options);

}  // namespace oct1d
