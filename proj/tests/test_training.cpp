#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

#include "oct1d/training.hpp"

using namespace oct1d;
namespace fs = std::filesystem;

namespace {

ModelConfig fcn(std::size_t classes, std::size_t q, std::uint64_t seed = 1) {
  ModelConfig c;
  c.architecture = Architecture::Fcn;
  c.num_classes = classes;
  c.input_length = q;
  c.seed = seed;
  return c;
}

TrainConfig quick(std::size_t epochs, std::uint64_t seed = 1) {
  TrainConfig c = TrainConfig::desk();
  c.epochs = epochs;
  c.seed = seed;
  return c;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("oct1d_train_" + name);
  fs::remove_all(d);
  return d;
}

SeriesSplit first_n(const SeriesSplit& s, std::size_t n) {
  SeriesSplit r;
  const std::size_t q = s.x.dim(1);
  r.x = Tensor({n, q, 1}, std::vector<double>(s.x.ptr(), s.x.ptr() + n * q));
  r.labels.assign(s.labels.begin(), s.labels.begin() + static_cast<long>(n));
  r.lengths.assign(s.lengths.begin(), s.lengths.begin() + static_cast<long>(n));
  r.valid.assign(s.valid.begin(), s.valid.begin() + static_cast<long>(n * q));
  return r;
}

}  // namespace

TEST(TrainConfig, Profiles) {
  EXPECT_EQ(TrainConfig::desk().epochs, 200u);
  EXPECT_EQ(TrainConfig::paper().epochs, 500u);
  EXPECT_EQ(TrainConfig::desk().batch_size, 16u);
  EXPECT_EQ(TrainConfig::desk().learning_rate, 1e-3);
  EXPECT_EQ(TrainConfig::desk().lr_patience, 50u);
  EXPECT_EQ(TrainConfig::desk().min_learning_rate, 1e-4);
  TrainConfig bad = TrainConfig::desk();
  bad.epochs = 0;
  EXPECT_THROW(bad.validate(), Error);
  bad = TrainConfig::desk();
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), Error);
  bad = TrainConfig::desk();
  bad.learning_rate = -1;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Train, ZeroLearningRateLeavesTrainableParametersUnchanged) {
  const SeriesDataset d = synth_toy(ToyKind::Sine, 4, 24, 1);
  Model m(fcn(3, 24));
  std::vector<Tensor> before;
  for (std::size_t i = 0; i < m.parameters().size(); ++i) before.push_back(m.parameters()[i].value);
  TrainConfig c = quick(1);
  c.learning_rate = 0.0;
  train(m, d.train, c);
  for (std::size_t i = 0; i < m.parameters().size(); ++i)
    if (m.parameters()[i].trainable) EXPECT_EQ(m.parameters()[i].value, before[i]) << m.parameters()[i].name;
}

TEST(Train, FcnOverfitsEightSamples) {
  const SeriesDataset d = synth_toy(ToyKind::Square, 10, 32, 2, 1.0);
  const SeriesSplit small = first_n(d.train, 8);
  Model m(fcn(3, 32));
  TrainConfig c = quick(300);
  c.batch_size = 8;
  const TrainHistory h = train(m, small, c);
  EXPECT_EQ(evaluate(m, small), 1.0);
  EXPECT_LE(h.epochs_run, 300u);
  EXPECT_LT(h.epoch_loss[h.best_epoch - 1], h.epoch_loss.front());
}

TEST(Train, FixedSeedReplaysExactly) {
  const SeriesDataset d = synth_toy(ToyKind::NoiseTrend, 6, 24, 3);
  auto run = [&] {
    Model m(fcn(3, 24, 5));
    const TrainHistory h = train(m, d.train, quick(4, 9));
    return std::pair{h.epoch_loss, evaluate(m, d.test)};
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Train, DatasetIsNotMutated) {
  const SeriesDataset d = synth_toy(ToyKind::Sine, 5, 20, 4);
  const SeriesSplit copy = d.train;
  Model m(fcn(3, 20));
  train(m, d.train, quick(2));
  EXPECT_EQ(d.train.x, copy.x);
  EXPECT_EQ(d.train.labels, copy.labels);
}

TEST(Train, KeepsLowestLossEpoch) {
  const SeriesDataset d = synth_toy(ToyKind::Sine, 5, 20, 5);
  Model m(fcn(3, 20));
  const TrainHistory h = train(m, d.train, quick(6));
  ASSERT_EQ(h.epoch_loss.size(), 6u);
  const auto best = std::min_element(h.epoch_loss.begin(), h.epoch_loss.end()) - h.epoch_loss.begin();
  EXPECT_EQ(h.best_epoch, static_cast<std::size_t>(best) + 1);
}

TEST(Train, PlateauDecayRespectsFloor) {
  const SeriesDataset d = synth_toy(ToyKind::Sine, 3, 16, 6);
  Model m(fcn(3, 16));
  TrainConfig c = quick(8);
  c.lr_patience = 1;
  c.lr_decay_factor = 0.1;
  c.learning_rate = 1e-2;
  c.min_learning_rate = 5e-4;
  const TrainHistory h = train(m, d.train, c);
  for (double lr : h.learning_rate) {
    EXPECT_GE(lr, 5e-4);
    EXPECT_LE(lr, 1e-2);
  }
}

TEST(Train, DivergenceIsRuntimeErrorNamingEpoch) {
  const SeriesDataset d = synth_toy(ToyKind::Sine, 4, 16, 7);
  Model m(fcn(3, 16));
  TrainConfig c = quick(5);
  c.learning_rate = 1e300;
  try {
    train(m, d.train, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Runtime);
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(Evaluate, ArgmaxTiesGoToLowestIndex) {
  const Tensor s({3, 4}, std::vector<double>{1, 3, 3, 0, 2, 2, 2, 2, -1, -5, -1, -2});
  EXPECT_EQ(argmax_row(s, 0), 1u);
  EXPECT_EQ(argmax_row(s, 1), 0u);
  EXPECT_EQ(argmax_row(s, 2), 0u);
}

TEST(Evaluate, PerfectAndHandCountedAccuracy) {
  const std::vector<std::size_t> labels{0, 1, 2, 0, 1, 2, 0, 1, 2, 2};
  EXPECT_EQ(accuracy(labels, labels), 1.0);
  // confusion: 3 of the 10 predictions are wrong
  const std::vector<std::size_t> pred{0, 1, 1, 0, 2, 2, 0, 1, 0, 2};
  EXPECT_DOUBLE_EQ(accuracy(pred, labels), 0.7);
  EXPECT_THROW(accuracy({0, 1}, {0}), Error);
}

TEST(Evaluate, ConstantPredictorOnBalancedFourClasses) {
  Model m(fcn(4, 12));
  m.parameters().get("head.w").value.fill(0.0);
  m.parameters().get("head.b").value.fill(0.0);
  SeriesSplit s;
  s.x = Tensor({8, 12, 1}, 0.5);
  s.labels = {0, 1, 2, 3, 3, 2, 1, 0};
  EXPECT_EQ(predict(m, s.x), std::vector<std::size_t>(8, 0));
  EXPECT_EQ(evaluate(m, s), 0.25);
}

TEST(ResultsStore, AppendAndReadBack) {
  const fs::path dir = fresh_dir("store");
  ResultsStore store(dir);
  RunRecord r{"synth", "fcn", 2, 12, 0.1 + 0.2, 1234, 7, 1.5};
  store.append(r);
  r.run = 3;
  r.accuracy = 1.0 / 3.0;
  store.append(r);
  std::ifstream is(store.runs_csv());
  std::string header;
  std::getline(is, header);
  EXPECT_EQ(header, "dataset,model,run,seed,accuracy,params,epochs,seconds");
  const auto back = read_runs_csv(store.runs_csv());
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].accuracy, 0.1 + 0.2);
  EXPECT_EQ(back[1].accuracy, 1.0 / 3.0);
  EXPECT_TRUE(same_outcome(back[1], r));
}

TEST(ResultsStore, AggregateMeanAndMax) {
  const fs::path dir = fresh_dir("agg");
  ResultsStore store(dir);
  std::vector<RunRecord> recs;
  for (double a : {0.8, 0.9, 1.0}) recs.push_back({"d", "m", recs.size(), 0, a, 10, 1, 0});
  store.write_aggregate("d", "m", recs, false);
  const auto j = nlohmann::json::parse(std::ifstream(dir / "d" / "m.json"));
  EXPECT_NEAR(j["mean"].get<double>(), 0.9, 1e-15);
  EXPECT_EQ(j["max"].get<double>(), 1.0);
  EXPECT_EQ(j["runs"].get<int>(), 3);
  EXPECT_FALSE(j["incomplete"].get<bool>());
}

TEST(ResultsStore, WrongHeaderIsParseError) {
  const fs::path p = fs::temp_directory_path() / "oct1d_bad_runs.csv";
  std::ofstream(p) << "a,b,c\n";
  try {
    read_runs_csv(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Parse);
  }
}

TEST(MultiRun, SingleRunMeanEqualsMax) {
  const SeriesDataset d = synth_toy(ToyKind::Sine, 4, 16, 8);
  MultiRunOptions o;
  o.runs = 1;
  const MultiRunResult r = multi_run(fcn(3, 16), d, quick(2), o);
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.mean, r.records[0].accuracy);
  EXPECT_EQ(r.max, r.records[0].accuracy);
}

TEST(MultiRun, ReplaysWithSameBaseSeedAndPersists) {
  const SeriesDataset d = synth_toy(ToyKind::Square, 4, 16, 9);
  const fs::path dir = fresh_dir("multi");
  ResultsStore store(dir);
  MultiRunOptions o;
  o.runs = 3;
  o.base_seed = 40;
  o.jobs = 2;
  o.store = &store;
  std::size_t callbacks = 0;
  o.on_record = [&](const RunRecord&) { ++callbacks; };
  const MultiRunResult a = multi_run(fcn(3, 16), d, quick(3), o);
  o.store = nullptr;
  o.on_record = nullptr;
  o.jobs = 1;
  const MultiRunResult b = multi_run(fcn(3, 16), d, quick(3), o);
  EXPECT_EQ(callbacks, 3u);
  ASSERT_EQ(a.records.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.records[i].run, i);
    EXPECT_EQ(a.records[i].seed, 40 + i);
    EXPECT_TRUE(same_outcome(a.records[i], b.records[i]));
  }
  double lo = 1, hi = 0;
  for (const auto& r : a.records) {
    lo = std::min(lo, r.accuracy);
    hi = std::max(hi, r.accuracy);
  }
  EXPECT_GE(a.mean, lo);
  EXPECT_LE(a.mean, hi);
  EXPECT_EQ(a.max, hi);
  EXPECT_EQ(read_runs_csv(store.runs_csv()).size(), 3u);
  EXPECT_TRUE(fs::exists(dir / d.name / "fcn.json"));
}

TEST(MultiRun, FailedRunsAreRecordedAndFlagged) {
  const SeriesDataset d = synth_toy(ToyKind::Sine, 3, 16, 10);
  TrainConfig c = quick(3);
  c.learning_rate = 1e300;
  MultiRunOptions o;
  o.runs = 2;
  const MultiRunResult r = multi_run(fcn(3, 16), d, c, o);
  EXPECT_EQ(r.failures.size(), 2u);
  EXPECT_TRUE(r.incomplete);
  EXPECT_TRUE(r.records.empty());
}
