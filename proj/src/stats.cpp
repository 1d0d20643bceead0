#include "oct1d/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace oct1d {

std::string_view direction_name(Direction d) noexcept {
  switch (d) {
    case Direction::A: return "a";
    case Direction::B: return "b";
    case Direction::None: break;
  }
  return "none";
}

namespace {

// Average ranks of `values` in ascending order, 1-based.
std::vector<double> rank_ascending(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

ComparisonReport wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                      std::string model_a, std::string model_b) {
  if (a.size() != b.size())
    fail(ErrorKind::Input, "wilcoxon: sample sizes differ (" + std::to_string(a.size()) + " vs " +
                               std::to_string(b.size()) + ")");
  if (a.empty()) fail(ErrorKind::Input, "wilcoxon: no paired samples");
  ComparisonReport r;
  r.model_a = std::move(model_a);
  r.model_b = std::move(model_b);
  r.n_total = a.size();

  std::vector<double> diff, mag;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i]) || !std::isfinite(b[i]))
      fail(ErrorKind::Input, "wilcoxon: non-finite sample");
    const double d = a[i] - b[i];
    if (d == 0.0) {
      ++r.zeros;
      continue;
    }
    diff.push_back(d);
    mag.push_back(std::abs(d));
  }
  r.n_used = diff.size();
  if (r.n_used == 0) {
    r.degenerate = true;
    r.p = r.p_holm = 1.0;
    return r;
  }
  const auto ranks = rank_ascending(mag);
  for (std::size_t i = 0; i < diff.size(); ++i) (diff[i] > 0 ? r.w_plus : r.w_minus) += ranks[i];
  r.w = std::min(r.w_plus, r.w_minus);
  r.better = r.w_plus > r.w_minus ? Direction::A
             : r.w_minus > r.w_plus ? Direction::B
                                    : Direction::None;

  const std::size_t n = r.n_used;
  if (n <= 25) {
    // Ranks are multiples of 1/2; count sign assignments with W+ <= W on the
    // doubled scale.
    std::vector<std::size_t> twice(n);
    std::size_t total = 0;
    for (std::size_t i = 0; i < n; ++i) total += twice[i] = static_cast<std::size_t>(std::lround(2.0 * ranks[i]));
    std::vector<double> ways(total + 1, 0.0);
    ways[0] = 1.0;
    for (auto t : twice)
      for (std::size_t s = total; s >= t; --s) {
        ways[s] += ways[s - t];
        if (s == t) break;
      }
    const auto limit = static_cast<std::size_t>(std::lround(2.0 * r.w));
    double count = 0.0;
    for (std::size_t s = 0; s <= limit; ++s) count += ways[s];
    r.p = std::min(1.0, 2.0 * count / std::ldexp(1.0, static_cast<int>(n)));
    r.exact = true;
  } else {
    const double nn = static_cast<double>(n);
    double tie = 0.0;
    auto sorted = mag;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size();) {
      std::size_t j = i;
      while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i + 1);
      tie += t * t * t - t;
      i = j + 1;
    }
    const double mean = nn * (nn + 1.0) / 4.0;
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie / 48.0;
    if (var <= 0.0) {
      r.p = 1.0;
    } else {
      const double z = std::min(0.0, r.w - mean + 0.5) / std::sqrt(var);
      r.p = std::min(1.0, 2.0 * normal_cdf(z));
    }
    r.exact = false;
  }
  r.p_holm = r.p;
  return r;
}

std::vector<double> holm_correct(std::span<const double> p) {
  if (p.empty()) fail(ErrorKind::Input, "holm_correct: no p-values");
  for (double v : p)
    if (!(v >= 0.0 && v <= 1.0)) fail(ErrorKind::Input, "holm_correct: p-value outside [0, 1]");
  const std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return p[i] < p[j]; });
  std::vector<double> out(m);
  double running = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const double adj = std::min(1.0, static_cast<double>(m - k) * p[order[k]]);
    running = std::max(running, adj);
    out[order[k]] = running;
  }
  return out;
}

std::vector<double> rank_descending(std::span<const double> values) {
  std::vector<double> neg(values.begin(), values.end());
  for (auto& v : neg) v = -v;
  return rank_ascending(neg);
}

std::optional<Metric> parse_metric(std::string_view s) noexcept {
  if (s == "mean") return Metric::Mean;
  if (s == "max") return Metric::Max;
  return std::nullopt;
}

void AccuracyTable::require_complete() const {
  std::string missing;
  std::size_t count = 0;
  for (std::size_t m = 0; m < models.size(); ++m)
    for (std::size_t d = 0; d < datasets.size(); ++d)
      if (!cells[m][d]) {
        if (count++ < 20) missing += (missing.empty() ? "" : ", ") + ("(" + models[m] + ", " + datasets[d] + ")");
      }
  if (count)
    fail(ErrorKind::Input, "accuracy table is missing " + std::to_string(count) +
                               " cell(s): " + missing + (count > 20 ? ", ..." : ""));
  if (models.empty() || datasets.empty()) fail(ErrorKind::Input, "accuracy table is empty");
}

std::vector<double> AccuracyTable::row(std::size_t model) const {
  std::vector<double> out;
  for (const auto& c : cells.at(model)) out.push_back(c.value_or(std::nan("")));
  return out;
}

AccuracyTable build_table(const std::vector<RunRecord>& records,
                          const std::vector<std::string>& models, Metric metric) {
  AccuracyTable t;
  if (models.empty()) {
    for (const auto& r : records)
      if (std::find(t.models.begin(), t.models.end(), r.model) == t.models.end())
        t.models.push_back(r.model);
  } else {
    t.models = models;
  }
  std::map<std::string, std::size_t> dataset_index;
  for (const auto& r : records) dataset_index.emplace(r.dataset, 0);
  for (auto& [name, i] : dataset_index) {
    i = t.datasets.size();
    t.datasets.push_back(name);
  }
  std::vector<std::vector<std::vector<double>>> acc(
      t.models.size(), std::vector<std::vector<double>>(t.datasets.size()));
  for (const auto& r : records) {
    auto it = std::find(t.models.begin(), t.models.end(), r.model);
    if (it == t.models.end()) continue;
    acc[it - t.models.begin()][dataset_index[r.dataset]].push_back(r.accuracy);
  }
  t.cells.assign(t.models.size(), std::vector<std::optional<double>>(t.datasets.size()));
  for (std::size_t m = 0; m < t.models.size(); ++m)
    for (std::size_t d = 0; d < t.datasets.size(); ++d) {
      const auto& v = acc[m][d];
      if (v.empty()) continue;
      t.cells[m][d] = metric == Metric::Max
                          ? *std::max_element(v.begin(), v.end())
                          : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    }
  return t;
}

std::vector<double> average_ranks(const AccuracyTable& table) {
  table.require_complete();
  const std::size_t k = table.models.size();
  std::vector<double> sum(k, 0.0);
  for (std::size_t d = 0; d < table.datasets.size(); ++d) {
    std::vector<double> column(k);
    for (std::size_t m = 0; m < k; ++m) column[m] = *table.cells[m][d];
    const auto r = rank_descending(column);
    for (std::size_t m = 0; m < k; ++m) sum[m] += r[m];
  }
  for (auto& s : sum) s /= static_cast<double>(table.datasets.size());
  return sum;
}

std::vector<ComparisonReport> pairwise_wilcoxon(const AccuracyTable& table) {
  table.require_complete();
  std::vector<ComparisonReport> out;
  for (std::size_t i = 0; i < table.models.size(); ++i)
    for (std::size_t j = i + 1; j < table.models.size(); ++j)
      out.push_back(wilcoxon_signed_rank(table.row(i), table.row(j), table.models[i], table.models[j]));
  if (out.empty()) return out;
  std::vector<double> p;
  for (const auto& r : out) p.push_back(r.p);
  const auto adj = holm_correct(p);
  for (std::size_t i = 0; i < out.size(); ++i) out[i].p_holm = adj[i];
  return out;
}

CDDiagram build_cd_diagram(const std::vector<std::string>& models, const std::vector<double>& ranks,
                           const std::vector<ComparisonReport>& reports, double alpha) {
  if (models.size() != ranks.size()) fail(ErrorKind::Input, "cd diagram: models and ranks differ in length");
  CDDiagram cd{models, ranks, {}};
  const std::size_t k = models.size();
  auto index = [&](const std::string& name) {
    return static_cast<std::size_t>(std::find(models.begin(), models.end(), name) - models.begin());
  };
  std::vector<std::vector<bool>> same(k, std::vector<bool>(k, true));
  for (const auto& r : reports) {
    const auto a = index(r.model_a), b = index(r.model_b);
    if (a >= k || b >= k) continue;
    same[a][b] = same[b][a] = !(r.p_holm <= alpha);
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return ranks[i] < ranks[j]; });
  // Longest run from each start position where every pair is non-significant;
  // keep the ones not contained in an earlier run.
  std::size_t covered_to = 0;
  for (std::size_t s = 0; s < k; ++s) {
    std::size_t e = s;
    while (e + 1 < k) {
      bool ok = true;
      for (std::size_t i = s; i <= e && ok; ++i) ok = same[order[i]][order[e + 1]];
      if (!ok) break;
      ++e;
    }
    if (e > s && e + 1 > covered_to) {
      cd.cliques.emplace_back(order.begin() + s, order.begin() + e + 1);
      covered_to = e + 1;
    }
  }
  return cd;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string cd_diagram_svg(const CDDiagram& cd) {
  const std::size_t k = cd.models.size();
  const double left = 160.0, right = 640.0, axis_y = 60.0;
  const double hi = std::max<double>(2.0, static_cast<double>(k));
  auto x_of = [&](double rank) { return left + (rank - 1.0) / (hi - 1.0) * (right - left); };

  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return cd.ranks[i] < cd.ranks[j]; });

  const double bars_y = axis_y + 20.0;
  const double labels_y = bars_y + 12.0 * static_cast<double>(cd.cliques.size()) + 20.0;
  const double height = labels_y + 22.0 * static_cast<double>((k + 1) / 2) + 20.0;

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"" << fmt(height)
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(axis_y) << "\" x2=\"" << fmt(right) << "\" y2=\""
     << fmt(axis_y) << "\" stroke=\"black\"/>\n";
  for (std::size_t r = 1; r <= static_cast<std::size_t>(hi); ++r) {
    const double x = x_of(static_cast<double>(r));
    os << "<line x1=\"" << fmt(x) << "\" y1=\"" << fmt(axis_y - 6) << "\" x2=\"" << fmt(x) << "\" y2=\""
       << fmt(axis_y) << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(axis_y - 10) << "\" text-anchor=\"middle\">" << r
       << "</text>\n";
  }
  for (std::size_t c = 0; c < cd.cliques.size(); ++c) {
    const auto& q = cd.cliques[c];
    const double y = bars_y + 12.0 * static_cast<double>(c);
    os << "<line x1=\"" << fmt(x_of(cd.ranks[q.front()]) - 4) << "\" y1=\"" << fmt(y) << "\" x2=\""
       << fmt(x_of(cd.ranks[q.back()]) + 4) << "\" y2=\"" << fmt(y)
       << "\" stroke=\"black\" stroke-width=\"4\"/>\n";
  }
  // Better half labelled on the left, the rest on the right.
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t m = order[i];
    const bool left_side = i < (k + 1) / 2;
    const std::size_t row = left_side ? i : k - 1 - i;
    const double x = x_of(cd.ranks[m]);
    const double y = labels_y + 22.0 * static_cast<double>(row);
    const double tx = left_side ? left - 20.0 : right + 20.0;
    os << "<polyline points=\"" << fmt(x) << ',' << fmt(axis_y) << ' ' << fmt(x) << ',' << fmt(y) << ' '
       << fmt(tx) << ',' << fmt(y) << "\" fill=\"none\" stroke=\"black\"/>\n";
    os << "<text x=\"" << fmt(left_side ? tx - 4 : tx + 4) << "\" y=\"" << fmt(y + 4) << "\" text-anchor=\""
       << (left_side ? "end" : "start") << "\">" << xml_escape(cd.models[m]) << " (" << fmt(cd.ranks[m])
       << ")</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string report_json(const ComparisonReport& r) {
  nlohmann::ordered_json j;
  j["model_a"] = r.model_a;
  j["model_b"] = r.model_b;
  j["n_total"] = r.n_total;
  j["n_used"] = r.n_used;
  j["zeros"] = r.zeros;
  j["w_plus"] = r.w_plus;
  j["w_minus"] = r.w_minus;
  j["w"] = r.w;
  j["p"] = r.p;
  j["p_holm"] = r.p_holm;
  j["exact"] = r.exact;
  j["degenerate"] = r.degenerate;
  j["better"] = r.better == Direction::A   ? nlohmann::ordered_json(r.model_a)
                : r.better == Direction::B ? nlohmann::ordered_json(r.model_b)
                                           : nlohmann::ordered_json(nullptr);
  return j.dump(2) + "\n";
}

std::vector<RunRecord> read_external_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::Io, "cannot open " + path.string());
  std::string line;
  std::vector<RunRecord> out;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (lineno == 1 && line == "model,dataset,accuracy")) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string part;
    while (std::getline(ss, part, ',')) f.push_back(part);
    const std::string at = path.string() + ":" + std::to_string(lineno) + ": ";
    if (f.size() != 3) fail(ErrorKind::Parse, at + "expected model,dataset,accuracy");
    RunRecord r;
    r.model = f[0];
    r.dataset = f[1];
    try {
      std::size_t pos = 0;
      r.accuracy = std::stod(f[2], &pos);
      if (pos != f[2].size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      fail(ErrorKind::Parse, at + "accuracy '" + f[2] + "' is not a number");
    }
    out.push_back(std::move(r));
  }
  return out;
}

CompareOutputs compare_results(const std::vector<RunRecord>& records,
                               const std::vector<std::string>& models, Metric metric,
                               const std::filesystem::path& out_dir) {
  CompareOutputs out;
  out.table = build_table(records, models, metric);
  if (out.table.models.size() < 2) fail(ErrorKind::Input, "comparison needs at least two models");
  out.table.require_complete();
  out.reports = pairwise_wilcoxon(out.table);
  out.diagram = build_cd_diagram(out.table.models, average_ranks(out.table), out.reports);
  std::filesystem::create_directories(out_dir);
  for (const auto& r : out.reports) {
    std::ofstream os(out_dir / ("wsrt_" + r.model_a + "_vs_" + r.model_b + ".json"));
    if (!os) fail(ErrorKind::Io, "cannot write report into " + out_dir.string());
    os << report_json(r);
  }
  std::ofstream svg(out_dir / "cd.svg");
  if (!svg) fail(ErrorKind::Io, "cannot write " + (out_dir / "cd.svg").string());
  svg << cd_diagram_svg(out.diagram);
  return out;
}

}  // namespace oct1d
