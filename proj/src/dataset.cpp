#include "oct1d/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

namespace oct1d {

namespace {

std::string where(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line) + ": ";
}

bool parse_number(const std::string& token, double& out) {
  if (token.empty()) return false;
  char* end = nullptr;
  out = std::strtod(token.c_str(), &end);
  return end == token.c_str() + token.size();
}

std::string trim(std::string s) {
  const auto ws = " \r\n";
  s.erase(s.find_last_not_of(ws) + 1);
  s.erase(0, s.find_first_not_of(ws));
  return s;
}

}  // namespace

std::vector<RawSeries> parse_ucr_tsv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::Io, "cannot open " + path.string());
  std::vector<RawSeries> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<std::string> tokens;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, '\t')) tokens.push_back(trim(tok));
    RawSeries row;
    if (!parse_number(tokens[0], row.label) || !std::isfinite(row.label))
      fail(ErrorKind::Parse, where(path, lineno) + "missing or non-numeric class label '" +
                                 tokens[0] + "'");
    for (std::size_t i = 1; i < tokens.size(); ++i) {
      double v;
      if (tokens[i].empty()) {
        v = std::nan("");
      } else if (!parse_number(tokens[i], v)) {
        fail(ErrorKind::Parse, where(path, lineno) + "non-numeric token '" + tokens[i] +
                                   "' in column " + std::to_string(i + 1));
      }
      row.values.push_back(v);
    }
    while (!row.values.empty() && std::isnan(row.values.back())) row.values.pop_back();
    if (row.values.empty())
      fail(ErrorKind::Parse, where(path, lineno) + "series has no observed values");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) fail(ErrorKind::Parse, path.string() + ": file contains no series");
  return rows;
}

void z_normalize(std::span<double> series, std::span<const std::uint8_t> valid) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < series.size(); ++i)
    if (valid[i]) {
      sum += series[i];
      ++n;
    }
  const double mean = n ? sum / static_cast<double>(n) : 0.0;
  double ss = 0.0;
  for (std::size_t i = 0; i < series.size(); ++i)
    if (valid[i]) ss += (series[i] - mean) * (series[i] - mean);
  const double sd = n ? std::sqrt(ss / static_cast<double>(n)) : 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (!valid[i] || sd < 1e-8) series[i] = 0.0;
    else series[i] = (series[i] - mean) / sd;
  }
}

std::vector<double> z_normalize(std::vector<double> series) {
  std::vector<std::uint8_t> valid(series.size(), 1);
  z_normalize(std::span<double>(series), valid);
  return series;
}

namespace {

SeriesSplit build_split(const std::vector<RawSeries>& rows, std::size_t length,
                        const std::map<double, std::size_t>& index, bool normalize,
                        const std::filesystem::path& path) {
  SeriesSplit split;
  const std::size_t n = rows.size();
  split.x = Tensor({n, length, 1});
  split.valid.assign(n * length, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = rows[i];
    auto it = index.find(row.label);
    if (it == index.end()) {
      std::ostringstream os;
      os << path.string() << ": class label " << row.label << " does not occur in the training split";
      fail(ErrorKind::Input, os.str());
    }
    split.labels.push_back(it->second);
    split.lengths.push_back(row.values.size());
    double* dst = split.x.ptr() + i * length;
    std::uint8_t* mask = split.valid.data() + i * length;
    for (std::size_t t = 0; t < row.values.size(); ++t) {
      if (std::isnan(row.values[t])) continue;
      dst[t] = row.values[t];
      mask[t] = 1;
    }
    if (normalize)
      z_normalize(std::span<double>(dst, length), std::span<const std::uint8_t>(mask, length));
  }
  return split;
}

}  // namespace

SeriesDataset load_ucr_tsv(const std::filesystem::path& train_path,
                           const std::filesystem::path& test_path, std::string name,
                           bool normalize) {
  const auto train_rows = parse_ucr_tsv(train_path);
  const auto test_rows = parse_ucr_tsv(test_path);
  std::map<double, std::size_t> index;
  for (const auto& r : train_rows) index.emplace(r.label, 0);
  SeriesDataset ds;
  for (auto& [label, k] : index) {
    k = ds.label_map.size();
    ds.label_map.push_back(label);
  }
  std::size_t length = 0;
  for (const auto* rows : {&train_rows, &test_rows})
    for (const auto& r : *rows) length = std::max(length, r.values.size());
  ds.train = build_split(train_rows, length, index, normalize, train_path);
  ds.test = build_split(test_rows, length, index, normalize, test_path);
  ds.name = name.empty() ? train_path.stem().string() : std::move(name);
  return ds;
}

void write_ucr_tsv(const std::filesystem::path& path, const SeriesSplit& split,
                   const std::vector<double>& label_map) {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::Io, "cannot write " + path.string());
  os.precision(17);
  const std::size_t length = split.x.dim(1);
  for (std::size_t i = 0; i < split.size(); ++i) {
    os << label_map.at(split.labels[i]);
    for (std::size_t t = 0; t < split.lengths[i]; ++t) {
      os << '\t';
      if (split.valid.empty() || split.valid[i * length + t]) os << split.x.at(i, t, 0);
      else os << "NaN";
    }
    os << '\n';
  }
}

std::string_view toy_kind_name(ToyKind kind) noexcept {
  switch (kind) {
    case ToyKind::Sine: return "sine";
    case ToyKind::Square: return "square";
    case ToyKind::NoiseTrend: return "noise-trend";
  }
  return "unknown";
}

namespace {

SeriesSplit synth_split(ToyKind kind, std::size_t n_per_class, std::size_t length, double noise,
                        std::mt19937_64& rng) {
  constexpr std::size_t kClasses = 3;
  constexpr double kCycles[kClasses] = {1.0, 2.0, 4.0};
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> amp_dist(0.8, 1.2);
  std::uniform_real_distribution<double> slope_dist(1.0, 2.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SeriesSplit split;
  const std::size_t n = n_per_class * kClasses;
  split.x = Tensor({n, length, 1});
  split.valid.assign(n * length, 1);
  std::size_t row = 0;
  for (std::size_t i = 0; i < n_per_class; ++i)
    for (std::size_t c = 0; c < kClasses; ++c, ++row) {
      const double phase = phase_dist(rng);
      const double amp = amp_dist(rng);
      const double slope = slope_dist(rng);
      double* dst = split.x.ptr() + row * length;
      for (std::size_t t = 0; t < length; ++t) {
        const double u = static_cast<double>(t) / static_cast<double>(length);
        double v = 0.0;
        switch (kind) {
          case ToyKind::Sine:
            v = amp * std::sin(2.0 * std::numbers::pi * kCycles[c] * u + phase);
            break;
          case ToyKind::Square:
            v = amp * (std::sin(2.0 * std::numbers::pi * kCycles[c] * u + phase) >= 0.0 ? 1.0 : -1.0);
            break;
          case ToyKind::NoiseTrend:
            v = c == 0 ? 0.0 : (c == 1 ? 1.0 : -1.0) * slope * (u - 0.5);
            break;
        }
        dst[t] = v + noise * gauss(rng);
      }
      z_normalize(std::span<double>(dst, length),
                  std::span<const std::uint8_t>(split.valid.data() + row * length, length));
      split.labels.push_back(c);
      split.lengths.push_back(length);
    }
  return split;
}

}  // namespace

SeriesDataset synth_toy(ToyKind kind, std::size_t n_per_class, std::size_t length,
                        std::uint64_t seed, double noise) {
  if (n_per_class == 0) fail(ErrorKind::Config, "synth_toy: n_per_class must be positive");
  if (length < 2) fail(ErrorKind::Config, "synth_toy: length must be at least 2");
  if (!(noise >= 0.0)) fail(ErrorKind::Config, "synth_toy: noise must be non-negative");
  std::mt19937_64 rng(seed);
  SeriesDataset ds;
  ds.train = synth_split(kind, n_per_class, length, noise, rng);
  ds.test = synth_split(kind, n_per_class, length, noise, rng);
  ds.label_map = {0.0, 1.0, 2.0};
  std::ostringstream name;
  name << "synth-" << toy_kind_name(kind) << '-' << n_per_class << '-' << length << '-' << seed;
  if (noise != 0.3) name << "-n" << noise;
  ds.name = name.str();
  return ds;
}

namespace {

std::uint64_t parse_uint(const std::string& field, const char* what, std::string_view uri) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(field, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  if (pos != field.size() || field.empty() || field[0] == '-')
    fail(ErrorKind::Config, "dataset '" + std::string(uri) + "': " + what + " must be a non-negative integer");
  return v;
}

}  // namespace

SeriesDataset load_dataset(std::string_view uri, const std::filesystem::path& data_dir) {
  if (uri.starts_with("synth:")) {
    std::vector<std::string> f;
    std::stringstream ss{std::string(uri.substr(6))};
    std::string part;
    while (std::getline(ss, part, ':')) f.push_back(part);
    if (f.size() != 4 && f.size() != 5)
      fail(ErrorKind::Config, "dataset '" + std::string(uri) +
                                  "': expected synth:<kind>:<n>:<Q>:<seed>[:<noise>]");
    ToyKind kind;
    if (f[0] == "sine") kind = ToyKind::Sine;
    else if (f[0] == "square") kind = ToyKind::Square;
    else if (f[0] == "noise-trend") kind = ToyKind::NoiseTrend;
    else fail(ErrorKind::Config, "dataset '" + std::string(uri) + "': unknown synthetic kind '" + f[0] + "'");
    double noise = 0.3;
    if (f.size() == 5 && !parse_number(f[4], noise))
      fail(ErrorKind::Config, "dataset '" + std::string(uri) + "': noise must be a number");
    return synth_toy(kind, parse_uint(f[1], "n", uri), parse_uint(f[2], "Q", uri),
                     parse_uint(f[3], "seed", uri), noise);
  }
  const std::string name(uri);
  const auto dir = data_dir / name;
  return load_ucr_tsv(dir / (name + "_TRAIN.tsv"), dir / (name + "_TEST.tsv"), name);
}

std::filesystem::path default_data_dir() {
  if (const char* env = std::getenv("OCT1D_DATA_DIR"); env && *env) return env;
  return "data";
}

}  // namespace oct1d
