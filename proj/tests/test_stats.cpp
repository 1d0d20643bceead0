#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>
#include <sstream>

#include "oct1d/stats.hpp"
#include "oracles.hpp"

using namespace oct1d;
namespace fs = std::filesystem;

namespace {

std::vector<double> uniform(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.5, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

AccuracyTable table_of(std::vector<std::string> models, std::vector<std::vector<double>> rows) {
  AccuracyTable t;
  t.models = std::move(models);
  for (std::size_t d = 0; d < rows[0].size(); ++d) t.datasets.push_back("d" + std::to_string(d));
  for (const auto& r : rows) t.cells.emplace_back(r.begin(), r.end());
  return t;
}

// Four models over twelve datasets: m0 clearly best, m3 clearly worst and
// the middle pair indistinguishable.
AccuracyTable cd_fixture() {
  std::vector<std::vector<double>> rows(4, std::vector<double>(12));
  for (std::size_t d = 0; d < 12; ++d) {
    const double base = 0.5 + 0.03 * static_cast<double>(d);
    rows[0][d] = base + 0.2;
    rows[1][d] = base + 0.1 + (d % 2 ? 0.01 : -0.01);
    rows[2][d] = base + 0.1 + (d % 2 ? -0.01 : 0.01);
    rows[3][d] = base;
  }
  return table_of({"alpha", "beta", "gamma", "delta"}, rows);
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

}  // namespace

TEST(Wilcoxon, IdenticalSamplesAreDegenerate) {
  const std::vector<double> a{0.5, 0.7, 0.9};
  const ComparisonReport r = wilcoxon_signed_rank(a, a);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.p, 1.0);
  EXPECT_EQ(r.zeros, 3u);
  EXPECT_EQ(r.n_used, 0u);
  EXPECT_EQ(r.better, Direction::None);
}

TEST(Wilcoxon, AllPositiveFiveDifferences) {
  const std::vector<double> a{2, 4, 6, 8, 10}, b{1, 2, 3, 4, 5};
  const ComparisonReport r = wilcoxon_signed_rank(a, b);
  EXPECT_EQ(r.w, 0.0);
  EXPECT_EQ(r.w_plus, 15.0);
  EXPECT_TRUE(r.exact);
  EXPECT_EQ(r.p, 0.0625);
  EXPECT_EQ(r.better, Direction::A);
}

TEST(Wilcoxon, MatchesEnumerationBitForBit) {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 50; ++rep) {
    const auto a = uniform(10, rng), b = uniform(10, rng);
    EXPECT_EQ(wilcoxon_signed_rank(a, b).p, oracle::wilcoxon_enumeration_p(a, b));
  }
}

TEST(Wilcoxon, MatchesEnumerationWithTiesAndZeros) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> level(0, 6);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 1 + rep % 12;
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = 0.1 * level(rng);
      b[i] = 0.1 * level(rng);
    }
    const ComparisonReport r = wilcoxon_signed_rank(a, b);
    EXPECT_NEAR(r.p, oracle::wilcoxon_enumeration_p(a, b), 1e-12);
    EXPECT_EQ(r.n_used + r.zeros, n);
    EXPECT_GE(r.p, 0.0);
    EXPECT_LE(r.p, 1.0);
  }
}

TEST(Wilcoxon, NormalApproximationAboveTwentyFive) {
  std::vector<double> a(30), b(30, 0.0);
  std::iota(a.begin(), a.end(), 1.0);
  const ComparisonReport r = wilcoxon_signed_rank(a, b);
  EXPECT_FALSE(r.exact);
  const double n = 30, mean = n * (n + 1) / 4, sd = std::sqrt(n * (n + 1) * (2 * n + 1) / 24);
  const double z = (0.0 - mean + 0.5) / sd;
  EXPECT_NEAR(r.p, std::erfc(-z / std::sqrt(2.0)), 1e-14);
}

TEST(Wilcoxon, NormalApproximationTieCorrection) {
  // 26 nonzero differences: 13 of magnitude 1 (negative), 13 of magnitude 2 (positive)
  std::vector<double> a(26), b(26, 0.0);
  for (std::size_t i = 0; i < 26; ++i) a[i] = i < 13 ? -1.0 : 2.0;
  const ComparisonReport r = wilcoxon_signed_rank(a, b);
  const double n = 26, mean = n * (n + 1) / 4;
  const double tie = 2 * (13.0 * 13 * 13 - 13);
  const double sd = std::sqrt(n * (n + 1) * (2 * n + 1) / 24 - tie / 48);
  EXPECT_EQ(r.w_minus, 13 * 7.0);
  const double z = (r.w - mean + 0.5) / sd;
  EXPECT_NEAR(r.p, std::erfc(-z / std::sqrt(2.0)), 1e-14);
}

TEST(Wilcoxon, SwapPreservesStatisticAndFlipsDirection) {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const auto a = uniform(15, rng), b = uniform(15, rng);
    const ComparisonReport ab = wilcoxon_signed_rank(a, b), ba = wilcoxon_signed_rank(b, a);
    EXPECT_EQ(ab.w, ba.w);
    EXPECT_EQ(ab.p, ba.p);
    if (ab.better != Direction::None) EXPECT_NE(ab.better, ba.better);
  }
}

TEST(Wilcoxon, DominatedPairHasZeroStatistic) {
  std::mt19937_64 rng(4);
  for (std::size_t n : {3u, 20u, 40u}) {
    auto b = uniform(n, rng), a = b;
    for (auto& v : a) v += 0.01;
    EXPECT_EQ(wilcoxon_signed_rank(a, b).w, 0.0);
  }
}

TEST(Wilcoxon, MismatchedLengthsRejected) {
  const std::vector<double> a{1, 2}, b{1};
  EXPECT_THROW(wilcoxon_signed_rank(a, b), Error);
}

TEST(Holm, Examples) {
  EXPECT_EQ(holm_correct(std::vector<double>{0.03}), (std::vector<double>{0.03}));
  const auto r = holm_correct(std::vector<double>{0.01, 0.04});
  EXPECT_DOUBLE_EQ(r[0], 0.02);
  EXPECT_DOUBLE_EQ(r[1], 0.04);
  // step-down monotonicity: 3*0.02 = 0.06 carries over the raw 0.03 * 2
  const auto s = holm_correct(std::vector<double>{0.04, 0.02, 0.03});
  EXPECT_DOUBLE_EQ(s[1], 0.06);
  EXPECT_DOUBLE_EQ(s[2], 0.06);
  EXPECT_DOUBLE_EQ(s[0], 0.06);
}

TEST(Holm, BoundsAndPermutationInvariance) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 0.3);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> p(7);
    for (auto& v : p) v = u(rng);
    const auto adj = holm_correct(p);
    std::vector<std::size_t> perm(7);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> q(7);
    for (std::size_t i = 0; i < 7; ++i) q[i] = p[perm[i]];
    const auto adj_q = holm_correct(q);
    for (std::size_t i = 0; i < 7; ++i) {
      EXPECT_GE(adj[i], p[i]);
      EXPECT_LE(adj[i], 1.0);
      EXPECT_EQ(adj_q[i], adj[perm[i]]);
    }
  }
}

TEST(Holm, InvalidInputRejected) {
  for (const std::vector<double>& p : {std::vector<double>{0.5, 1.5}, std::vector<double>{-0.1}, std::vector<double>{}}) {
    try {
      holm_correct(p);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::Input);
    }
  }
}

TEST(Ranks, Examples) {
  EXPECT_EQ(average_ranks(table_of({"a", "b"}, {{0.9, 0.8, 0.7}, {0.5, 0.4, 0.3}})), (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ(average_ranks(table_of({"a", "b", "c"}, {{0.5, 0.6}, {0.5, 0.6}, {0.5, 0.6}})),
            (std::vector<double>{2.0, 2.0, 2.0}));
}

TEST(Ranks, MatchSortOracleAndPreserveSums) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> level(0, 5);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<std::vector<double>> rows(4, std::vector<double>(10));
    for (auto& r : rows)
      for (auto& v : r) v = 0.5 + 0.1 * level(rng);
    const AccuracyTable t = table_of({"a", "b", "c", "d"}, rows);
    std::vector<double> expect(4, 0.0);
    for (std::size_t d = 0; d < 10; ++d) {
      std::vector<double> col;
      for (const auto& r : rows) col.push_back(r[d]);
      const auto ranks = oracle::ranks_by_sort(col);
      EXPECT_EQ(rank_descending(col), ranks);
      EXPECT_DOUBLE_EQ(std::accumulate(ranks.begin(), ranks.end(), 0.0), 10.0);
      for (std::size_t m = 0; m < 4; ++m) expect[m] += ranks[m] / 10.0;
    }
    const auto got = average_ranks(t);
    for (std::size_t m = 0; m < 4; ++m) EXPECT_NEAR(got[m], expect[m], 1e-12);
    EXPECT_NEAR(std::accumulate(got.begin(), got.end(), 0.0), 10.0, 1e-12);
  }
}

TEST(Table, MissingCellsNamed) {
  std::vector<RunRecord> recs{{"d1", "a", 0, 0, 0.5, 1, 1, 0}, {"d2", "a", 0, 0, 0.6, 1, 1, 0}, {"d1", "b", 0, 0, 0.7, 1, 1, 0}};
  const AccuracyTable t = build_table(recs, {}, Metric::Mean);
  EXPECT_EQ(t.models, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(t.datasets, (std::vector<std::string>{"d1", "d2"}));
  try {
    t.require_complete();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Input);
    EXPECT_NE(std::string(e.what()).find("(b, d2)"), std::string::npos);
  }
  EXPECT_THROW(average_ranks(t), Error);
}

TEST(Table, MeanAndMaxAggregation) {
  std::vector<RunRecord> recs;
  for (double a : {0.8, 0.9, 1.0}) recs.push_back({"d", "m", recs.size(), 0, a, 1, 1, 0});
  EXPECT_NEAR(*build_table(recs, {}, Metric::Mean).cells[0][0], 0.9, 1e-15);
  EXPECT_EQ(*build_table(recs, {}, Metric::Max).cells[0][0], 1.0);
  EXPECT_EQ(parse_metric("max"), Metric::Max);
  EXPECT_FALSE(parse_metric("median").has_value());
}

TEST(CdDiagram, SingleModelHasNoBars) {
  const CDDiagram cd = build_cd_diagram({"only"}, {1.0}, {});
  EXPECT_TRUE(cd.cliques.empty());
  const std::string svg = cd_diagram_svg(cd);
  EXPECT_EQ(svg.find("stroke-width=\"4\""), std::string::npos);
  EXPECT_NE(svg.find("only (1.00)"), std::string::npos);
}

TEST(CdDiagram, TwoNonSignificantModelsShareOneBar) {
  ComparisonReport r;
  r.model_a = "a";
  r.model_b = "b";
  r.p = r.p_holm = 0.4;
  const CDDiagram cd = build_cd_diagram({"a", "b"}, {1.4, 1.6}, {r});
  ASSERT_EQ(cd.cliques.size(), 1u);
  EXPECT_EQ(cd.cliques[0], (std::vector<std::size_t>{0, 1}));
  const std::string svg = cd_diagram_svg(cd);
  std::size_t bars = 0;
  for (std::size_t pos = 0; (pos = svg.find("stroke-width=\"4\"", pos)) != std::string::npos; ++pos) ++bars;
  EXPECT_EQ(bars, 1u);
  r.p_holm = 0.01;
  EXPECT_TRUE(build_cd_diagram({"a", "b"}, {1.4, 1.6}, {r}).cliques.empty());
}

TEST(CdDiagram, FixtureCliquesAndGoldenSvg) {
  const AccuracyTable t = cd_fixture();
  const auto ranks = average_ranks(t);
  EXPECT_EQ(ranks, (std::vector<double>{1.0, 2.5, 2.5, 4.0}));
  const auto reports = pairwise_wilcoxon(t);
  ASSERT_EQ(reports.size(), 6u);
  const CDDiagram cd = build_cd_diagram(t.models, ranks, reports);
  ASSERT_EQ(cd.cliques.size(), 1u);
  EXPECT_EQ(cd.cliques[0].size(), 2u);
  const std::string svg = cd_diagram_svg(cd);
  EXPECT_EQ(svg, cd_diagram_svg(build_cd_diagram(t.models, average_ranks(t), pairwise_wilcoxon(t))));
  const fs::path golden = fs::path(OCT1D_TEST_DATA) / "cd_fixture.svg";
  if (std::getenv("OCT1D_UPDATE_GOLDEN")) std::ofstream(golden, std::ios::binary) << svg;
  EXPECT_EQ(svg, read_file(golden));
}

TEST(Compare, WritesPairReportsAndDiagram) {
  const AccuracyTable t = cd_fixture();
  std::vector<RunRecord> recs;
  for (std::size_t m = 0; m < 4; ++m)
    for (std::size_t d = 0; d < 12; ++d) recs.push_back({t.datasets[d], t.models[m], 0, 0, *t.cells[m][d], 1, 1, 0});
  const fs::path out = fs::temp_directory_path() / "oct1d_compare";
  fs::remove_all(out);
  const CompareOutputs o = compare_results(recs, {"alpha", "delta"}, Metric::Mean, out);
  ASSERT_EQ(o.reports.size(), 1u);
  EXPECT_TRUE(fs::exists(out / "cd.svg"));
  const auto j = nlohmann::json::parse(std::ifstream(out / "wsrt_alpha_vs_delta.json"));
  EXPECT_EQ(j["n_used"].get<int>(), 12);
  EXPECT_EQ(j["w"].get<double>(), 0.0);
  EXPECT_EQ(j["better"].get<std::string>(), "alpha");
  EXPECT_THROW(compare_results(recs, {"alpha"}, Metric::Mean, out), Error);
}

TEST(Compare, ExternalCsv) {
  const fs::path p = fs::temp_directory_path() / "oct1d_external.csv";
  std::ofstream(p) << "model,dataset,accuracy\nhive,d0,0.91\nhive,d1,0.5\n";
  const auto recs = read_external_csv(p);
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].model, "hive");
  EXPECT_EQ(recs[1].accuracy, 0.5);
  std::ofstream(p) << "hive,d0,abc\n";
  EXPECT_THROW(read_external_csv(p), Error);
}
