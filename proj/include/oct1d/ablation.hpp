#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "oct1d/dataset.hpp"
#include "oct1d/model.hpp"

namespace oct1d {

struct FeatureSet {
  Tensor features;  // (N, D)
  std::vector<std::size_t> labels;
  std::string source;  // model name, or "raw"
  std::string layer;   // tap, "gap" for model features
};

/// GAP output of the convolutional branch, inference mode.
FeatureSet extract_features(const Model& model, const SeriesSplit& split, std::size_t batch = 64);

/// The padded series themselves as (N, Q) features.
FeatureSet raw_features(const SeriesSplit& split);

struct SvmConfig {
  double c = 1.0;
  std::size_t epochs = 200;
  double learning_rate = 1e-2;
  std::uint64_t seed = 0;
};

/// One-vs-rest linear classifier trained on standardized features with the
/// objective  lambda/2 |w|^2 + mean_i max(0, 1 - y_i (w.x_i + b)),
/// lambda = 0.01 / C, by full-batch subgradient descent with step
/// lr / (1 + 0.01 t). The seed draws a small initial weight vector.
class LinearSvm {
 public:
  static LinearSvm fit(const Tensor& x, const std::vector<std::size_t>& labels, const SvmConfig& config);

  /// Decision values (N, K).
  Tensor decision(const Tensor& x) const;
  std::vector<std::size_t> predict(const Tensor& x) const;

  const Tensor& weights() const noexcept { return w_; }  // (K, D)
  const std::vector<double>& bias() const noexcept { return b_; }

 private:
  std::vector<double> mean_, scale_;
  Tensor w_;
  std::vector<double> b_;
};

/// Test accuracy of a LinearSvm trained on `train`.
double linear_svm(const FeatureSet& train, const FeatureSet& test, const SvmConfig& config = {});

struct LayerActivations {
  std::string tag;                           // block1, res2, ...
  std::vector<std::size_t> filters;          // selected channel indices, ascending
  std::vector<std::vector<double>> values;   // values[f][position]
};

struct ActivationDump {
  std::vector<double> input;
  std::vector<LayerActivations> layers;
  std::vector<std::string> warnings;
};

/// Responses of `filters_per_layer` randomly chosen channels of every
/// convolutional block for one series. Octave blocks number their high
/// channels first, then the low ones; low responses run at half length.
ActivationDump activation_dump(const Model& model, std::span<const double> series,
                               std::size_t filters_per_layer, std::uint64_t seed);

/// `layer,filter,position,value` with full round-trip precision.
void write_activations_csv(const std::filesystem::path& path, const ActivationDump& dump);
void write_features_csv(const std::filesystem::path& path, const FeatureSet& features);
/// Input series and the selected responses of one layer as line plots.
std::string activation_svg(const ActivationDump& dump, std::size_t layer);

struct AblationReport {
  std::string dataset;
  std::string model;
  std::size_t feature_width = 0;
  double feature_accuracy = 0.0;
  double raw_accuracy = 0.0;
  SvmConfig svm;
};

/// Writes features_train.csv, features_test.csv, svm_report.json,
/// activations.csv and layer<k>.svg into `out_dir` for a trained model. The
/// activation probe uses the first test series.
AblationReport run_ablation(const Model& model, const SeriesDataset& data,
                            const std::filesystem::path& out_dir, std::size_t filters_per_layer,
                            const SvmConfig& svm, std::vector<std::string>* warnings = nullptr);

}  // namespace oct1d
