#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <random>
#include <sstream>

#include "oct1d/ablation.hpp"
#include "oct1d/training.hpp"

using namespace oct1d;
namespace fs = std::filesystem;

namespace {

ModelConfig config(Architecture a, std::size_t q = 32) {
  ModelConfig c;
  c.architecture = a;
  c.num_classes = 3;
  c.input_length = q;
  c.seed = 3;
  return c;
}

// Two Gaussian blobs in D dimensions whose means differ by `gap` along every axis.
FeatureSet blobs(std::size_t n_per_class, std::size_t d, double gap, std::mt19937_64& rng, double sd = 0.3) {
  std::normal_distribution<double> noise(0.0, sd);
  FeatureSet f;
  f.features = Tensor({2 * n_per_class, d});
  for (std::size_t i = 0; i < 2 * n_per_class; ++i) {
    const std::size_t y = i % 2;
    f.labels.push_back(y);
    for (std::size_t j = 0; j < d; ++j) f.features.at(i, j) = (y ? gap / 2 : -gap / 2) + noise(rng);
  }
  return f;
}

SeriesSplit concat(const SeriesSplit& a, const SeriesSplit& b) {
  SeriesSplit r;
  std::vector<double> v(a.x.data().begin(), a.x.data().end());
  v.insert(v.end(), b.x.data().begin(), b.x.data().end());
  r.x = Tensor({a.size() + b.size(), a.x.dim(1), 1}, std::move(v));
  r.labels = a.labels;
  r.labels.insert(r.labels.end(), b.labels.begin(), b.labels.end());
  return r;
}

}  // namespace

TEST(Features, WidthIs128ForFcnFamily) {
  const SeriesDataset d = synth_toy(ToyKind::Sine, 2, 32, 1);
  for (Architecture a : {Architecture::Fcn, Architecture::OctFcn, Architecture::LstmFcn, Architecture::LstmOctFcn,
                         Architecture::AlstmFcn, Architecture::AlstmOctFcn}) {
    Model m(config(a));
    const FeatureSet f = extract_features(m, d.test);
    EXPECT_EQ(f.features.shape(), (Shape{6, 128})) << architecture_name(a);
    EXPECT_EQ(m.feature_width(), 128u);
    EXPECT_EQ(f.layer, "gap");
  }
}

TEST(Features, DeterministicAndSplitConcatenationInvariant) {
  const SeriesDataset d = synth_toy(ToyKind::Square, 5, 32, 2);
  Model m(config(Architecture::OctFcn));
  const FeatureSet a = extract_features(m, d.train), b = extract_features(m, d.train);
  EXPECT_EQ(a.features, b.features);
  const FeatureSet t = extract_features(m, d.test);
  const FeatureSet all = extract_features(m, concat(d.train, d.test));
  const std::size_t n = d.train.size(), w = 128;
  for (std::size_t i = 0; i < all.features.dim(0); ++i)
    for (std::size_t j = 0; j < w; ++j) {
      const double expect = i < n ? a.features.at(i, j) : t.features.at(i - n, j);
      ASSERT_NEAR(all.features.at(i, j), expect, 1e-12);
    }
}

TEST(Features, ZeroFinalBlockGivesZeroFeatures) {
  const SeriesDataset d = synth_toy(ToyKind::Sine, 3, 32, 3);
  Model m(config(Architecture::Fcn));
  for (const char* name : {"block3.conv.w", "block3.conv.b", "block3.bn.beta"}) m.parameters().get(name).value.fill(0.0);
  const FeatureSet f = extract_features(m, d.test);
  for (double v : f.features.data()) EXPECT_EQ(v, 0.0);
}

TEST(LinearSvm, SeparableBlobsAreClassifiedPerfectly) {
  std::mt19937_64 rng(4);
  const FeatureSet train = blobs(50, 5, 2.0, rng), test = blobs(50, 5, 2.0, rng);
  EXPECT_EQ(linear_svm(train, test, {}), 1.0);
}

TEST(LinearSvm, PermutedLabelsScoreNearChance) {
  std::mt19937_64 rng(5);
  double total = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    FeatureSet train = blobs(40, 4, 1.0, rng, 1.0);
    const FeatureSet test = blobs(40, 4, 1.0, rng, 1.0);
    std::shuffle(train.labels.begin(), train.labels.end(), rng);
    SvmConfig c;
    c.seed = seed;
    const double acc = linear_svm(train, test, c);
    EXPECT_GE(acc, 0.0);
    EXPECT_LE(acc, 1.0);
    total += acc;
  }
  EXPECT_NEAR(total / 20, 0.5, 0.1);
}

TEST(LinearSvm, DuplicatedTrainingSetGivesSameBoundary) {
  std::mt19937_64 rng(6);
  const FeatureSet train = blobs(30, 6, 1.0, rng, 0.8);
  FeatureSet twice = train;
  std::vector<double> v(train.features.data().begin(), train.features.data().end());
  v.insert(v.end(), train.features.data().begin(), train.features.data().end());
  twice.features = Tensor({60 * 2, 6}, std::move(v));
  twice.labels.insert(twice.labels.end(), train.labels.begin(), train.labels.end());
  const LinearSvm a = LinearSvm::fit(train.features, train.labels, {});
  const LinearSvm b = LinearSvm::fit(twice.features, twice.labels, {});
  EXPECT_LE(max_abs_diff(a.weights(), b.weights()), 1e-6);
  for (std::size_t k = 0; k < a.bias().size(); ++k) EXPECT_NEAR(a.bias()[k], b.bias()[k], 1e-6);
}

TEST(LinearSvm, DeterministicUnderSeed) {
  std::mt19937_64 rng(7);
  const FeatureSet train = blobs(20, 3, 0.5, rng, 1.0);
  SvmConfig c;
  c.seed = 11;
  EXPECT_EQ(LinearSvm::fit(train.features, train.labels, c).weights(),
            LinearSvm::fit(train.features, train.labels, c).weights());
}

TEST(LinearSvm, MulticlassAndTieBreak) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> noise(0, 0.1);
  Tensor x({90, 2});
  std::vector<std::size_t> y;
  const double cx[] = {0, 3, 0}, cy[] = {0, 0, 3};
  for (std::size_t i = 0; i < 90; ++i) {
    y.push_back(i % 3);
    x.at(i, 0) = cx[i % 3] + noise(rng);
    x.at(i, 1) = cy[i % 3] + noise(rng);
  }
  const LinearSvm s = LinearSvm::fit(x, y, {});
  EXPECT_EQ(s.weights().shape(), (Shape{3, 2}));
  EXPECT_EQ(s.predict(x), y);
}

TEST(LinearSvm, SingleClassIsConfigError) {
  try {
    LinearSvm::fit(Tensor({3, 2}, 1.0), {1, 1, 1}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Config);
  }
}

TEST(ActivationDump, ValuesEqualForwardProbesBitwise) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> series(33);
  for (auto& v : series) v = u(rng);
  for (Architecture a : {Architecture::Fcn, Architecture::OctFcn, Architecture::OctResNet}) {
    Model m(config(a, 33));
    const ActivationDump dump = activation_dump(m, series, 5, 12);
    Tape tape(Mode::Infer);
    ForwardTrace trace;
    m.features(tape, tape.constant(Tensor({1, 33, 1}, series)), &trace);
    ASSERT_EQ(dump.layers.size(), 3u) << architecture_name(a);
    for (const LayerActivations& layer : dump.layers) {
      const Tensor* high = nullptr;
      const Tensor* low = nullptr;
      for (const auto& [name, var] : trace.taps) {
        if (name == layer.tag || name == layer.tag + ".high") high = &tape.value(var);
        if (name == layer.tag + ".low") low = &tape.value(var);
      }
      ASSERT_NE(high, nullptr) << layer.tag;
      EXPECT_EQ(layer.filters.size(), 5u);
      EXPECT_TRUE(std::is_sorted(layer.filters.begin(), layer.filters.end()));
      for (std::size_t i = 0; i < layer.filters.size(); ++i) {
        const std::size_t f = layer.filters[i];
        const bool is_low = f >= high->dim(2);
        const Tensor& src = is_low ? *low : *high;
        const std::size_t ch = is_low ? f - high->dim(2) : f;
        ASSERT_EQ(layer.values[i].size(), src.dim(1));
        for (std::size_t t = 0; t < src.dim(1); ++t) ASSERT_EQ(layer.values[i][t], src.at(0, t, ch));
      }
    }
  }
}

TEST(ActivationDump, ClampsToLayerWidthWithWarning) {
  Model m(config(Architecture::Fcn, 16));
  const std::vector<double> series(16, 0.5);
  const ActivationDump dump = activation_dump(m, series, 1000, 1);
  EXPECT_EQ(dump.layers[0].filters.size(), 128u);
  EXPECT_EQ(dump.layers[1].filters.size(), 256u);
  EXPECT_FALSE(dump.warnings.empty());
  EXPECT_TRUE(activation_dump(m, series, 4, 1).warnings.empty());
}

TEST(ActivationDump, ZeroInputZeroBiasGivesZeroResponses) {
  Model m(config(Architecture::OctFcn, 16));
  const ActivationDump dump = activation_dump(m, std::vector<double>(16, 0.0), 6, 2);
  for (const auto& layer : dump.layers)
    for (const auto& row : layer.values)
      for (double v : row) EXPECT_EQ(v, 0.0);
}

TEST(ActivationDump, SeedFixesFilterSample) {
  Model m(config(Architecture::Fcn, 16));
  const std::vector<double> series(16, 0.5);
  EXPECT_EQ(activation_dump(m, series, 6, 3).layers[1].filters, activation_dump(m, series, 6, 3).layers[1].filters);
  EXPECT_NE(activation_dump(m, series, 6, 3).layers[1].filters, activation_dump(m, series, 6, 4).layers[1].filters);
}

TEST(Ablation, WritesAllOutputs) {
  const SeriesDataset d = synth_toy(ToyKind::Sine, 6, 32, 10);
  Model m(config(Architecture::OctFcn));
  TrainConfig c = TrainConfig::desk();
  c.epochs = 2;
  train(m, d.train, c);
  const fs::path out = fs::temp_directory_path() / "oct1d_ablation";
  fs::remove_all(out);
  const AblationReport r = run_ablation(m, d, out, 4, {});
  EXPECT_EQ(r.feature_width, 128u);
  for (const char* f : {"features_train.csv", "features_test.csv", "svm_report.json", "activations.csv", "layer1.svg",
                        "layer2.svg", "layer3.svg"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  std::ifstream csv(out / "activations.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "layer,filter,position,value");
  const auto j = nlohmann::json::parse(std::ifstream(out / "svm_report.json"));
  EXPECT_EQ(j["feature_accuracy"].get<double>(), r.feature_accuracy);
  std::ifstream feats(out / "features_train.csv");
  std::getline(feats, header);
  EXPECT_TRUE(header.starts_with("label,f0,f1"));
}
