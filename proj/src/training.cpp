#include "oct1d/training.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace oct1d {

TrainConfig TrainConfig::desk() { return TrainConfig{}; }

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.epochs = 500;
  c.precision = Precision::Single;
  return c;
}

void TrainConfig::validate() const {
  if (epochs < 1) fail(ErrorKind::Config, "epochs must be >= 1");
  if (batch_size < 1) fail(ErrorKind::Config, "batch_size must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    fail(ErrorKind::Config, "learning_rate must be a finite non-negative number");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0))
    fail(ErrorKind::Config, "lr_decay_factor must lie in (0, 1]");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    fail(ErrorKind::Config, "Adam betas must lie in [0, 1)");
  if (!(adam_epsilon > 0.0)) fail(ErrorKind::Config, "adam_epsilon must be positive");
}

namespace {

class Adam {
 public:
  Adam(ParameterStore& store, const TrainConfig& c) : c_(c) {
    for (std::size_t i = 0; i < store.size(); ++i) {
      m_.emplace_back(store[i].value.size(), 0.0);
      v_.emplace_back(store[i].value.size(), 0.0);
    }
  }

  void step(ParameterStore& store, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(c_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(c_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < store.size(); ++i) {
      Parameter& p = store[i];
      if (!p.trainable) continue;
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t k = 0; k < p.value.size(); ++k) {
        const double g = p.grad[k];
        m[k] = c_.beta1 * m[k] + (1.0 - c_.beta1) * g;
        v[k] = c_.beta2 * v[k] + (1.0 - c_.beta2) * g * g;
        p.value[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + c_.adam_epsilon);
      }
    }
  }

 private:
  const TrainConfig& c_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t t_ = 0;
};

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& idx, std::size_t begin,
                   std::size_t end) {
  const std::size_t len = x.dim(1), ch = x.dim(2);
  const std::size_t stride = len * ch;
  std::vector<double> data;
  data.reserve((end - begin) * stride);
  for (std::size_t i = begin; i < end; ++i)
    data.insert(data.end(), x.ptr() + idx[i] * stride, x.ptr() + (idx[i] + 1) * stride);
  return Tensor({end - begin, len, ch}, std::move(data));
}

}  // namespace

TrainHistory train(Model& model, const SeriesSplit& data, const TrainConfig& config) {
  config.validate();
  const std::size_t n = data.size();
  if (n == 0) fail(ErrorKind::Input, "training split is empty");
  for (auto l : data.labels)
    if (l >= model.config().num_classes)
      fail(ErrorKind::LabelRange, "training label exceeds the model's class count");

  ParameterStore& store = model.parameters();
  Adam adam(store, config);
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  TrainHistory history;
  double lr = config.learning_rate;
  double best_loss = INFINITY;
  double plateau_best = INFINITY;
  std::size_t wait = 0;
  std::vector<Tensor> best_params;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + config.batch_size);
      std::vector<std::size_t> labels;
      for (std::size_t i = start; i < end; ++i) labels.push_back(data.labels[order[i]]);
      Tape tape(Mode::Train, config.precision, rng());
      store.zero_grad();
      double loss_value = 0.0;
      try {
        Var x = tape.constant(gather_rows(data.x, order, start, end));
        Var loss = ops::softmax_cross_entropy(tape, model.forward(tape, x), labels);
        loss_value = tape.value(loss)[0];
        tape.backward(loss);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::NonFinite) throw;
        fail(ErrorKind::Runtime,
             "training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
      }
      adam.step(store, lr);
      total += loss_value * static_cast<double>(end - start);
    }
    const double epoch_loss = total / static_cast<double>(n);
    if (!std::isfinite(epoch_loss))
      fail(ErrorKind::Runtime, "training diverged at epoch " + std::to_string(epoch) +
                                   ": non-finite loss");
    history.epoch_loss.push_back(epoch_loss);
    history.learning_rate.push_back(lr);
    history.epochs_run = epoch;
    if (epoch_loss < best_loss) {
      best_loss = epoch_loss;
      best_params = store.snapshot();
      history.best_epoch = epoch;
    }
    if (epoch_loss < plateau_best) {
      plateau_best = epoch_loss;
      wait = 0;
    } else if (++wait >= config.lr_patience) {
      lr = std::max(lr * config.lr_decay_factor, std::min(config.min_learning_rate, lr));
      wait = 0;
    }
  }
  if (!best_params.empty()) store.restore(best_params);
  return history;
}

std::size_t argmax_row(const Tensor& scores, std::size_t row) {
  const std::size_t k = scores.dim(1);
  std::size_t best = 0;
  for (std::size_t j = 1; j < k; ++j)
    if (scores.at(row, j) > scores.at(row, best)) best = j;
  return best;
}

std::vector<std::size_t> predict(const Model& model, const Tensor& x) {
  const Tensor p = predict_proba(model, x);
  std::vector<std::size_t> out(p.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = argmax_row(p, i);
  return out;
}

double accuracy(const std::vector<std::size_t>& predicted,
                const std::vector<std::size_t>& labels) {
  if (predicted.size() != labels.size())
    fail(ErrorKind::Dimension, "accuracy: prediction count != label count");
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predicted[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double evaluate(const Model& model, const SeriesSplit& split) {
  return accuracy(predict(model, split.x), split.labels);
}

bool same_outcome(const RunRecord& a, const RunRecord& b) {
  return a.dataset == b.dataset && a.model == b.model && a.run == b.run && a.seed == b.seed &&
         a.accuracy == b.accuracy && a.params == b.params && a.epochs == b.epochs;
}

ResultsStore::ResultsStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) fail(ErrorKind::Io, "cannot create results directory " + dir_.string());
}

void ResultsStore::append(const RunRecord& r) {
  std::lock_guard lock(mutex_);
  const auto path = runs_csv();
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream os(path, std::ios::app);
  if (!os) fail(ErrorKind::Io, "cannot append to " + path.string());
  if (fresh) os << kHeader << '\n';
  char acc[64], secs[64];
  std::snprintf(acc, sizeof acc, "%.17g", r.accuracy);
  std::snprintf(secs, sizeof secs, "%.3f", r.seconds);
  os << r.dataset << ',' << r.model << ',' << r.run << ',' << r.seed << ',' << acc << ','
     << r.params << ',' << r.epochs << ',' << secs << '\n';
}

void ResultsStore::write_aggregate(const std::string& dataset, const std::string& model,
                                   const std::vector<RunRecord>& records, bool incomplete) {
  std::lock_guard lock(mutex_);
  nlohmann::json j;
  j["dataset"] = dataset;
  j["model"] = model;
  j["runs"] = records.size();
  std::vector<double> accs;
  for (const auto& r : records) accs.push_back(r.accuracy);
  j["accuracies"] = accs;
  j["mean"] = accs.empty() ? 0.0 : std::accumulate(accs.begin(), accs.end(), 0.0) / accs.size();
  j["max"] = accs.empty() ? 0.0 : *std::max_element(accs.begin(), accs.end());
  j["params"] = records.empty() ? 0 : records.front().params;
  j["incomplete"] = incomplete;
  const auto dir = dir_ / dataset;
  std::filesystem::create_directories(dir);
  std::ofstream os(dir / (model + ".json"));
  if (!os) fail(ErrorKind::Io, "cannot write aggregate for " + dataset + "/" + model);
  os << j.dump(2) << '\n';
}

std::vector<RunRecord> read_runs_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::Io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != ResultsStore::kHeader)
    fail(ErrorKind::Parse, path.string() + ":1: expected header '" +
                               std::string(ResultsStore::kHeader) + "'");
  std::vector<RunRecord> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string part;
    while (std::getline(ss, part, ',')) f.push_back(part);
    if (f.size() != 8)
      fail(ErrorKind::Parse, path.string() + ":" + std::to_string(lineno) + ": expected 8 fields");
    try {
      RunRecord r;
      r.dataset = f[0];
      r.model = f[1];
      r.run = std::stoull(f[2]);
      r.seed = std::stoull(f[3]);
      r.accuracy = std::stod(f[4]);
      r.params = std::stoull(f[5]);
      r.epochs = std::stoull(f[6]);
      r.seconds = std::stod(f[7]);
      out.push_back(std::move(r));
    } catch (const std::exception&) {
      fail(ErrorKind::Parse, path.string() + ":" + std::to_string(lineno) + ": malformed field");
    }
  }
  return out;
}

MultiRunResult multi_run(const ModelConfig& model_config, const SeriesDataset& data,
                         const TrainConfig& train_config, const MultiRunOptions& options) {
  if (options.runs < 1) fail(ErrorKind::Config, "runs must be >= 1");
  train_config.validate();
  const std::size_t runs = options.runs;
  std::vector<std::optional<RunRecord>> records(runs);
  std::vector<std::optional<std::string>> errors(runs);
  std::mutex callback_mutex;

  auto run_one = [&](std::size_t run) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t seed = options.base_seed + run;
    try {
      ModelConfig mc = model_config;
      mc.seed = seed;
      mc.num_classes = data.num_classes();
      mc.input_length = data.length();
      Model model(mc);
      TrainConfig tc = train_config;
      tc.seed = seed;
      const auto history = train(model, data.train, tc);
      RunRecord r;
      r.dataset = data.name;
      r.model = std::string(architecture_name(mc.architecture));
      r.run = run;
      r.seed = seed;
      r.accuracy = evaluate(model, data.test);
      r.params = model.param_count();
      r.epochs = history.epochs_run;
      r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (options.store) options.store->append(r);
      if (options.on_record) {
        std::lock_guard lock(callback_mutex);
        options.on_record(r);
      }
      records[run] = std::move(r);
    } catch (const std::exception& e) {
      errors[run] = e.what();
    }
  };

  const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, runs));
  if (jobs == 1) {
    for (std::size_t r = 0; r < runs; ++r) run_one(r);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    for (std::size_t j = 0; j < jobs; ++j)
      workers.emplace_back([&] {
        for (std::size_t r; (r = next.fetch_add(1)) < runs;) run_one(r);
      });
    for (auto& w : workers) w.join();
  }

  MultiRunResult result;
  for (std::size_t r = 0; r < runs; ++r) {
    if (records[r]) result.records.push_back(*records[r]);
    if (errors[r]) result.failures.push_back({r, *errors[r]});
  }
  result.incomplete = !result.failures.empty();
  if (!result.records.empty()) {
    double sum = 0.0;
    result.max = 0.0;
    for (const auto& r : result.records) {
      sum += r.accuracy;
      result.max = std::max(result.max, r.accuracy);
    }
    result.mean = sum / static_cast<double>(result.records.size());
  }
  if (options.store && !result.records.empty())
    options.store->write_aggregate(data.name, std::string(architecture_name(model_config.architecture)),
                                   result.records, result.incomplete);
  return result;
}

}  // namespace oct1d
