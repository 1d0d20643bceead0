#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oct1d/training.hpp"

namespace oct1d {

enum class Direction { None, A, B };

std::string_view direction_name(Direction d) noexcept;

struct ComparisonReport {
  std::string model_a;
  std::string model_b;
  std::size_t n_total = 0;
  std::size_t n_used = 0;  // n_total - zeros
  std::size_t zeros = 0;
  double w_plus = 0.0;
  double w_minus = 0.0;
  double w = 0.0;  // min(w_plus, w_minus)
  double p = 1.0;  // two-sided
  double p_holm = 1.0;
  bool exact = true;
  bool degenerate = false;  // every difference was zero
  Direction better = Direction::None;
};

/// Two-sided Wilcoxon signed-rank test on paired samples a[i] vs b[i].
/// Zero differences are dropped; tied |d| share average ranks. The p-value is
/// exact for up to 25 nonzero differences and uses the normal approximation
/// with tie and continuity corrections beyond that.
ComparisonReport wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                      std::string model_a = "a", std::string model_b = "b");

/// Holm step-down adjustment; output is in input order.
std::vector<double> holm_correct(std::span<const double> p_values);

/// Fractional ranks of one column, rank 1 for the largest value.
std::vector<double> rank_descending(std::span<const double> values);

enum class Metric { Mean, Max };

std::optional<Metric> parse_metric(std::string_view s) noexcept;

/// Accuracy per (model, dataset); cells may be missing until validated.
struct AccuracyTable {
  std::vector<std::string> models;
  std::vector<std::string> datasets;
  std::vector<std::vector<std::optional<double>>> cells;  // [model][dataset]

  /// Throws ErrorKind::Input listing every missing (model, dataset) cell.
  void require_complete() const;
  std::vector<double> row(std::size_t model) const;
};

/// Aggregates run records per (model, dataset) by mean or max accuracy.
/// `models` selects and orders rows; empty means every model in first-seen
/// order. Datasets are sorted by name.
AccuracyTable build_table(const std::vector<RunRecord>& records,
                          const std::vector<std::string>& models, Metric metric);

/// Mean rank per model (rank 1 = best accuracy, ties averaged).
std::vector<double> average_ranks(const AccuracyTable& table);

/// Every pairwise test between table rows, Holm-adjusted as one family.
std::vector<ComparisonReport> pairwise_wilcoxon(const AccuracyTable& table);

struct CDDiagram {
  std::vector<std::string> models;
  std::vector<double> ranks;
  /// Maximal groups of mutually non-significant models, as indices into
  /// `models`, each sorted by rank.
  std::vector<std::vector<std::size_t>> cliques;
};

CDDiagram build_cd_diagram(const std::vector<std::string>& models, const std::vector<double>& ranks,
                           const std::vector<ComparisonReport>& reports, double alpha = 0.05);

std::string cd_diagram_svg(const CDDiagram& diagram);

std::string report_json(const ComparisonReport& report);

/// Literature accuracies, `model,dataset,accuracy`, as single-run records.
std::vector<RunRecord> read_external_csv(const std::filesystem::path& path);

struct CompareOutputs {
  AccuracyTable table;
  std::vector<ComparisonReport> reports;
  CDDiagram diagram;
};

/// Full comparison over a results CSV: table, pairwise tests and the CD
/// diagram, written to `<out_dir>/wsrt_<A>_vs_<B>.json` and `<out_dir>/cd.svg`.
CompareOutputs compare_results(const std::vector<RunRecord>& records,
                               const std::vector<std::string>& models, Metric metric,
                               const std::filesystem::path& out_dir);

}  // namespace oct1d
