#include "oct1d/ablation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

namespace oct1d {

FeatureSet extract_features(const Model& model, const SeriesSplit& split, std::size_t batch) {
  const Tensor& x = split.x;
  require_rank(x, 3, "extract_features input");
  const std::size_t n = x.dim(0), len = x.dim(1), d = model.feature_width();
  FeatureSet fs;
  fs.features = Tensor({n, d});
  fs.labels = split.labels;
  fs.source = std::string(architecture_name(model.config().architecture));
  fs.layer = "gap";
  for (std::size_t start = 0; start < n; start += batch) {
    const std::size_t m = std::min(batch, n - start);
    Tensor chunk({m, len, 1}, std::vector<double>(x.ptr() + start * len, x.ptr() + (start + m) * len));
    Tape tape(Mode::Infer);
    const Tensor& f = tape.value(model.features(tape, tape.constant(std::move(chunk))));
    std::copy(f.data().begin(), f.data().end(), fs.features.ptr() + start * d);
  }
  return fs;
}

FeatureSet raw_features(const SeriesSplit& split) {
  FeatureSet fs;
  const auto& v = split.x.values();
  fs.features = Tensor({split.x.dim(0), split.x.dim(1)}, std::vector<double>(v.begin(), v.end()));
  fs.labels = split.labels;
  fs.source = "raw";
  fs.layer = "input";
  return fs;
}

LinearSvm LinearSvm::fit(const Tensor& x, const std::vector<std::size_t>& labels, const SvmConfig& cfg) {
  require_rank(x, 2, "linear_svm features");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (labels.size() != n) fail(ErrorKind::Dimension, "linear_svm: label count != feature rows");
  if (!(cfg.c > 0.0)) fail(ErrorKind::Config, "linear_svm: C must be positive");
  const std::size_t k = n ? *std::max_element(labels.begin(), labels.end()) + 1 : 0;
  std::vector<std::size_t> present(k, 0);
  for (auto l : labels) present[l] = 1;
  if (std::accumulate(present.begin(), present.end(), std::size_t{0}) < 2)
    fail(ErrorKind::Config, "linear_svm: training set needs at least two classes");

  LinearSvm svm;
  svm.mean_.assign(d, 0.0);
  svm.scale_.assign(d, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) svm.mean_[j] += x.at(i, j);
  for (auto& m : svm.mean_) m /= static_cast<double>(n);
  std::vector<double> var(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double t = x.at(i, j) - svm.mean_[j];
      var[j] += t * t;
    }
  for (std::size_t j = 0; j < d; ++j) {
    const double sd = std::sqrt(var[j] / static_cast<double>(n));
    svm.scale_[j] = sd > 1e-12 ? 1.0 / sd : 0.0;
  }
  std::vector<double> z(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) z[i * d + j] = (x.at(i, j) - svm.mean_[j]) * svm.scale_[j];

  const double lambda = 0.01 / cfg.c;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> init(-1e-3, 1e-3);
  svm.w_ = Tensor({k, d});
  svm.b_.assign(k, 0.0);
  for (std::size_t i = 0; i < k * d; ++i) svm.w_[i] = init(rng);

  std::vector<double> gw(d);
  for (std::size_t c = 0; c < k; ++c) {
    double* w = svm.w_.ptr() + c * d;
    double& b = svm.b_[c];
    for (std::size_t t = 0; t < cfg.epochs; ++t) {
      const double lr = cfg.learning_rate / (1.0 + 0.01 * static_cast<double>(t));
      for (std::size_t j = 0; j < d; ++j) gw[j] = lambda * w[j];
      double gb = 0.0;
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double y = labels[i] == c ? 1.0 : -1.0;
        const double* zi = z.data() + i * d;
        double s = b;
        for (std::size_t j = 0; j < d; ++j) s += w[j] * zi[j];
        if (y * s < 1.0) {
          for (std::size_t j = 0; j < d; ++j) gw[j] -= inv_n * y * zi[j];
          gb -= inv_n * y;
        }
      }
      for (std::size_t j = 0; j < d; ++j) w[j] -= lr * gw[j];
      b -= lr * gb;
    }
  }
  return svm;
}

Tensor LinearSvm::decision(const Tensor& x) const {
  require_rank(x, 2, "linear_svm features");
  const std::size_t n = x.dim(0), d = x.dim(1), k = b_.size();
  if (d != mean_.size()) fail(ErrorKind::Dimension, "linear_svm: feature width differs from training");
  Tensor out({n, k});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < k; ++c) {
      double s = b_[c];
      for (std::size_t j = 0; j < d; ++j) s += w_.at(c, j) * (x.at(i, j) - mean_[j]) * scale_[j];
      out.at(i, c) = s;
    }
  return out;
}

std::vector<std::size_t> LinearSvm::predict(const Tensor& x) const {
  const Tensor s = decision(x);
  std::vector<std::size_t> out(s.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < s.dim(1); ++c)
      if (s.at(i, c) > s.at(i, best)) best = c;
    out[i] = best;
  }
  return out;
}

double linear_svm(const FeatureSet& train, const FeatureSet& test, const SvmConfig& config) {
  const auto svm = LinearSvm::fit(train.features, train.labels, config);
  const auto pred = svm.predict(test.features);
  if (pred.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == test.labels.at(i);
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

ActivationDump activation_dump(const Model& model, std::span<const double> series,
                               std::size_t filters_per_layer, std::uint64_t seed) {
  if (series.empty()) fail(ErrorKind::Input, "activation_dump: empty series");
  ActivationDump dump;
  dump.input.assign(series.begin(), series.end());
  Tape tape(Mode::Infer);
  ForwardTrace trace;
  model.features(tape, tape.constant(Tensor({1, series.size(), 1}, dump.input)), &trace);

  // Group taps into layers; octave blocks contribute a high and a low part.
  struct Part {
    const Tensor* value;
  };
  std::vector<std::pair<std::string, std::vector<Part>>> groups;
  for (const auto& [name, var] : trace.taps) {
    if (name == "gap") continue;
    const std::string base = name.substr(0, name.find('.'));
    if (groups.empty() || groups.back().first != base) groups.push_back({base, {}});
    groups.back().second.push_back({&tape.value(var)});
  }

  std::mt19937_64 rng(seed);
  for (const auto& [tag, parts] : groups) {
    std::size_t width = 0;
    for (const auto& p : parts) width += p.value->dim(2);
    std::size_t take = filters_per_layer;
    if (take > width) {
      dump.warnings.push_back(tag + ": " + std::to_string(filters_per_layer) +
                              " filters requested, layer has " + std::to_string(width) +
                              "; using all of them");
      take = width;
    }
    std::vector<std::size_t> pick(width);
    std::iota(pick.begin(), pick.end(), 0);
    std::shuffle(pick.begin(), pick.end(), rng);
    pick.resize(take);
    std::sort(pick.begin(), pick.end());

    LayerActivations layer;
    layer.tag = tag;
    layer.filters = pick;
    for (auto f : pick) {
      std::size_t local = f;
      const Tensor* v = nullptr;
      for (const auto& p : parts) {
        if (local < p.value->dim(2)) {
          v = p.value;
          break;
        }
        local -= p.value->dim(2);
      }
      std::vector<double> resp(v->dim(1));
      for (std::size_t t = 0; t < resp.size(); ++t) resp[t] = v->at(0, t, local);
      layer.values.push_back(std::move(resp));
    }
    dump.layers.push_back(std::move(layer));
  }
  return dump;
}

void write_activations_csv(const std::filesystem::path& path, const ActivationDump& dump) {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::Io, "cannot write " + path.string());
  os << "layer,filter,position,value\n";
  char buf[40];
  for (const auto& layer : dump.layers)
    for (std::size_t i = 0; i < layer.filters.size(); ++i)
      for (std::size_t t = 0; t < layer.values[i].size(); ++t) {
        std::snprintf(buf, sizeof buf, "%.17g", layer.values[i][t]);
        os << layer.tag << ',' << layer.filters[i] << ',' << t << ',' << buf << '\n';
      }
}

void write_features_csv(const std::filesystem::path& path, const FeatureSet& fs) {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::Io, "cannot write " + path.string());
  const std::size_t n = fs.features.dim(0), d = fs.features.dim(1);
  os << "label";
  for (std::size_t j = 0; j < d; ++j) os << ",f" << j;
  os << '\n';
  char buf[40];
  for (std::size_t i = 0; i < n; ++i) {
    os << fs.labels.at(i);
    for (std::size_t j = 0; j < d; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", fs.features.at(i, j));
      os << ',' << buf;
    }
    os << '\n';
  }
}

std::string activation_svg(const ActivationDump& dump, std::size_t index) {
  const auto& layer = dump.layers.at(index);
  constexpr double kW = 720, kH = 320, kPad = 40;
  static constexpr const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  double lo = 0.0, hi = 0.0;
  auto widen = [&](const std::vector<double>& v) {
    for (double x : v) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  };
  widen(dump.input);
  for (const auto& v : layer.values) widen(v);
  if (hi - lo < 1e-12) hi = lo + 1.0;

  auto path = [&](const std::vector<double>& v) {
    std::ostringstream os;
    char buf[64];
    const double span = v.size() > 1 ? static_cast<double>(v.size() - 1) : 1.0;
    for (std::size_t t = 0; t < v.size(); ++t) {
      const double x = kPad + (kW - 2 * kPad) * static_cast<double>(t) / span;
      const double y = kH - kPad - (kH - 2 * kPad) * (v[t] - lo) / (hi - lo);
      std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", t ? " " : "", x, y);
      os << buf;
    }
    return os.str();
  };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kPad << "\" y=\"20\">" << layer.tag << "</text>\n";
  os << "<polyline points=\"" << path(dump.input)
     << "\" fill=\"none\" stroke=\"black\" stroke-width=\"2\"/>\n";
  for (std::size_t i = 0; i < layer.values.size(); ++i)
    os << "<polyline points=\"" << path(layer.values[i]) << "\" fill=\"none\" stroke=\""
       << kColors[i % std::size(kColors)] << "\"><title>filter " << layer.filters[i]
       << "</title></polyline>\n";
  os << "</svg>\n";
  return os.str();
}

AblationReport run_ablation(const Model& model, const SeriesDataset& data,
                            const std::filesystem::path& out_dir, std::size_t filters_per_layer,
                            const SvmConfig& svm, std::vector<std::string>* warnings) {
  std::filesystem::create_directories(out_dir);
  const auto train_f = extract_features(model, data.train);
  const auto test_f = extract_features(model, data.test);
  write_features_csv(out_dir / "features_train.csv", train_f);
  write_features_csv(out_dir / "features_test.csv", test_f);

  AblationReport rep;
  rep.dataset = data.name;
  rep.model = train_f.source;
  rep.feature_width = model.feature_width();
  rep.svm = svm;
  rep.feature_accuracy = linear_svm(train_f, test_f, svm);
  rep.raw_accuracy = linear_svm(raw_features(data.train), raw_features(data.test), svm);

  nlohmann::ordered_json j;
  j["dataset"] = rep.dataset;
  j["model"] = rep.model;
  j["feature_layer"] = "gap";
  j["feature_width"] = rep.feature_width;
  j["feature_accuracy"] = rep.feature_accuracy;
  j["raw_accuracy"] = rep.raw_accuracy;
  j["svm"] = {{"C", svm.c}, {"epochs", svm.epochs}, {"learning_rate", svm.learning_rate}, {"seed", svm.seed}};
  std::ofstream(out_dir / "svm_report.json") << j.dump(2) << '\n';

  const std::size_t len = data.test.x.dim(1);
  const auto dump = activation_dump(model, std::span<const double>(data.test.x.ptr(), len),
                                    filters_per_layer, svm.seed);
  write_activations_csv(out_dir / "activations.csv", dump);
  for (std::size_t k = 0; k < dump.layers.size(); ++k)
    std::ofstream(out_dir / ("layer" + std::to_string(k + 1) + ".svg")) << activation_svg(dump, k);
  if (warnings) warnings->insert(warnings->end(), dump.warnings.begin(), dump.warnings.end());
  return rep;
}

}  // namespace oct1d
