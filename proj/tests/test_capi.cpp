#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "oct1d/oct1d.h"

namespace fs = std::filesystem;

namespace {

struct Owned {
  char* s = nullptr;
  ~Owned() { oct1d_string_free(s); }
  std::string str() const { return s ? s : ""; }
};

oct1d_model_spec spec(const char* arch, size_t classes, size_t q) {
  oct1d_model_spec s;
  oct1d_model_spec_init(&s);
  s.architecture = arch;
  s.num_classes = classes;
  s.input_length = q;
  s.seed = 2;
  return s;
}

oct1d_train_config* quick_config(const char* epochs) {
  oct1d_train_config* cfg = nullptr;
  EXPECT_EQ(oct1d_train_config_new("desk", &cfg), OCT1D_OK);
  EXPECT_EQ(oct1d_train_config_set(cfg, "epochs", epochs), OCT1D_OK);
  return cfg;
}

}  // namespace

TEST(CApi, VersionAndStatusNames) {
  EXPECT_STRNE(oct1d_version(), "");
  EXPECT_STREQ(oct1d_status_name(OCT1D_OK), "ok");
  EXPECT_STRNE(oct1d_status_name(OCT1D_ERR_PARSE), oct1d_status_name(OCT1D_ERR_IO));
}

TEST(CApi, NullArgumentsReported) {
  EXPECT_EQ(oct1d_dataset_load(nullptr, nullptr, nullptr), OCT1D_ERR_ARGUMENT);
  EXPECT_STRNE(oct1d_last_error(), "");
  oct1d_model* m = nullptr;
  EXPECT_EQ(oct1d_model_new(nullptr, &m), OCT1D_ERR_ARGUMENT);
  EXPECT_EQ(m, nullptr);
  oct1d_dataset_free(nullptr);
  oct1d_model_free(nullptr);
  oct1d_train_config_free(nullptr);
  oct1d_string_free(nullptr);
}

TEST(CApi, ErrorKindsMapToStatusCodes) {
  oct1d_dataset* ds = nullptr;
  EXPECT_EQ(oct1d_dataset_load("synth:zigzag:4:16:1", nullptr, &ds), OCT1D_ERR_CONFIG);
  EXPECT_EQ(oct1d_dataset_load("NoSuchSet", "/nonexistent", &ds), OCT1D_ERR_IO);
  const std::string bad = (fs::temp_directory_path() / "oct1d_capi_bad.tsv").string();
  FILE* f = std::fopen(bad.c_str(), "w");
  std::fputs("1\t1\tzz\n", f);
  std::fclose(f);
  EXPECT_EQ(oct1d_dataset_load_tsv(bad.c_str(), bad.c_str(), "bad", &ds), OCT1D_ERR_PARSE);
  EXPECT_NE(std::string(oct1d_last_error()).find("zz"), std::string::npos);

  oct1d_model* m = nullptr;
  oct1d_model_spec s = spec("nonsense", 3, 16);
  EXPECT_EQ(oct1d_model_new(&s, &m), OCT1D_ERR_CONFIG);
  s = spec("fcn", 1, 16);
  EXPECT_EQ(oct1d_model_new(&s, &m), OCT1D_ERR_CONFIG);

  oct1d_train_config* cfg = nullptr;
  EXPECT_EQ(oct1d_train_config_new("huge", &cfg), OCT1D_ERR_CONFIG);
  ASSERT_EQ(oct1d_train_config_new(nullptr, &cfg), OCT1D_OK);
  EXPECT_EQ(oct1d_train_config_set(cfg, "momentum", "1"), OCT1D_ERR_CONFIG);
  EXPECT_EQ(oct1d_train_config_set(cfg, "epochs", "ten"), OCT1D_ERR_CONFIG);
  EXPECT_EQ(oct1d_train_config_set(cfg, "epochs", "0"), OCT1D_ERR_CONFIG);
  oct1d_train_config_free(cfg);
}

TEST(CApi, DatasetAccessors) {
  oct1d_dataset* ds = nullptr;
  ASSERT_EQ(oct1d_dataset_load("synth:sine:4:24:1", nullptr, &ds), OCT1D_OK);
  EXPECT_EQ(oct1d_dataset_length(ds), 24u);
  EXPECT_EQ(oct1d_dataset_num_classes(ds), 3u);
  EXPECT_EQ(oct1d_dataset_size(ds, 0), 12u);
  EXPECT_EQ(oct1d_dataset_size(ds, 1), 12u);
  EXPECT_STRNE(oct1d_dataset_name(ds), "");
  oct1d_dataset_free(ds);
  ASSERT_EQ(oct1d_dataset_load("Tiny", OCT1D_TEST_DATA_DIR, &ds), OCT1D_OK);
  EXPECT_STREQ(oct1d_dataset_name(ds), "Tiny");
  EXPECT_EQ(oct1d_dataset_length(ds), 5u);
  oct1d_dataset_free(ds);
}

TEST(CApi, TrainEvaluatePredictSaveLoad) {
  oct1d_dataset* ds = nullptr;
  ASSERT_EQ(oct1d_dataset_load("synth:square:5:24:3", nullptr, &ds), OCT1D_OK);
  const oct1d_model_spec s = spec("octfcn", 3, 24);
  oct1d_model* m = nullptr;
  ASSERT_EQ(oct1d_model_new(&s, &m), OCT1D_OK);
  EXPECT_GT(oct1d_model_param_count(m), 0u);
  oct1d_train_config* cfg = quick_config("3");
  size_t epochs = 0;
  ASSERT_EQ(oct1d_model_train(m, ds, cfg, &epochs), OCT1D_OK) << oct1d_last_error();
  EXPECT_EQ(epochs, 3u);
  double acc = -1;
  ASSERT_EQ(oct1d_model_evaluate(m, ds, 1, &acc), OCT1D_OK);
  EXPECT_GE(acc, 0.0);
  EXPECT_LE(acc, 1.0);
  EXPECT_EQ(oct1d_model_evaluate(m, ds, 7, &acc), OCT1D_ERR_ARGUMENT);

  std::vector<double> x(2 * 24, 0.25), p(2 * 3), p2(2 * 3);
  ASSERT_EQ(oct1d_model_predict_proba(m, x.data(), 2, 24, p.data()), OCT1D_OK);
  EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-12);

  const std::string path = (fs::temp_directory_path() / "oct1d_capi_model.bin").string();
  ASSERT_EQ(oct1d_model_save(m, path.c_str()), OCT1D_OK);
  oct1d_model* fresh = nullptr;
  oct1d_model_spec s2 = s;
  s2.seed = 99;
  ASSERT_EQ(oct1d_model_new(&s2, &fresh), OCT1D_OK);
  ASSERT_EQ(oct1d_model_load(fresh, path.c_str()), OCT1D_OK);
  ASSERT_EQ(oct1d_model_predict_proba(fresh, x.data(), 2, 24, p2.data()), OCT1D_OK);
  EXPECT_EQ(p, p2);

  oct1d_model* other = nullptr;
  const oct1d_model_spec s3 = spec("fcn", 3, 24);
  ASSERT_EQ(oct1d_model_new(&s3, &other), OCT1D_OK);
  EXPECT_NE(oct1d_model_load(other, path.c_str()), OCT1D_OK);
  EXPECT_EQ(oct1d_model_predict_proba(m, x.data(), 2, 0, p.data()), OCT1D_ERR_DIMENSION);

  oct1d_model_free(other);
  oct1d_model_free(fresh);
  oct1d_model_free(m);
  oct1d_train_config_free(cfg);
  oct1d_dataset_free(ds);
}

TEST(CApi, MultiRunReportsRecordsAndSummary) {
  oct1d_dataset* ds = nullptr;
  ASSERT_EQ(oct1d_dataset_load("synth:sine:4:16:5", nullptr, &ds), OCT1D_OK);
  const oct1d_model_spec s = spec("fcn", 3, 16);
  oct1d_train_config* cfg = quick_config("2");
  oct1d_multi_run_options o;
  oct1d_multi_run_options_init(&o);
  EXPECT_EQ(o.runs, 20u);
  o.runs = 2;
  o.base_seed = 10;
  const fs::path dir = fs::temp_directory_path() / "oct1d_capi_runs";
  fs::remove_all(dir);
  const std::string dir_s = dir.string();
  o.results_dir = dir_s.c_str();
  std::vector<std::pair<size_t, double>> seen;
  o.user = &seen;
  o.on_record = [](const oct1d_run_record* r, void* user) {
    static_cast<std::vector<std::pair<size_t, double>>*>(user)->push_back({r->run, r->accuracy});
  };
  oct1d_multi_run_summary sum{};
  ASSERT_EQ(oct1d_multi_run(&s, ds, cfg, &o, &sum), OCT1D_OK) << oct1d_last_error();
  EXPECT_EQ(sum.completed, 2u);
  EXPECT_EQ(sum.failed, 0u);
  ASSERT_EQ(seen.size(), 2u);
  EXPECT_NEAR(sum.mean, (seen[0].second + seen[1].second) / 2, 1e-15);
  EXPECT_EQ(sum.max, std::max(seen[0].second, seen[1].second));
  EXPECT_TRUE(fs::exists(dir / "runs.csv"));

  // runs.csv from the two-model comparison feeds compare
  const oct1d_model_spec s2 = spec("octfcn", 3, 16);
  ASSERT_EQ(oct1d_multi_run(&s2, ds, cfg, &o, &sum), OCT1D_OK);
  const char* models[] = {"fcn", "octfcn"};
  Owned summary;
  const std::string reports = (dir / "reports").string();
  ASSERT_EQ(oct1d_compare((dir / "runs.csv").string().c_str(), nullptr, models, 2, "mean", reports.c_str(), &summary.s),
            OCT1D_OK)
      << oct1d_last_error();
  EXPECT_NE(summary.str().find("average_ranks"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "reports" / "cd.svg"));
  EXPECT_TRUE(fs::exists(dir / "reports" / "wsrt_fcn_vs_octfcn.json"));
  Owned none;
  EXPECT_EQ(oct1d_compare((dir / "runs.csv").string().c_str(), nullptr, models, 2, "median", reports.c_str(), &none.s),
            OCT1D_ERR_CONFIG);

  oct1d_train_config_set(cfg, "learning_rate", "1e300");
  o.on_record = nullptr;
  EXPECT_EQ(oct1d_multi_run(&s, ds, cfg, &o, &sum), OCT1D_ERR_RUNTIME);
  EXPECT_EQ(sum.failed, 2u);
  oct1d_train_config_free(cfg);
  oct1d_dataset_free(ds);
}

TEST(CApi, GradcheckCleanAndFaulty) {
  Owned clean, faulty;
  int ok = 0;
  ASSERT_EQ(oct1d_gradcheck(0, 2, nullptr, &clean.s, &ok), OCT1D_OK);
  EXPECT_EQ(ok, 1);
  EXPECT_NE(clean.str().find("octconv.ll"), std::string::npos);
  ASSERT_EQ(oct1d_gradcheck(0, 2, "lstm", &faulty.s, &ok), OCT1D_OK);
  EXPECT_EQ(ok, 0);
  EXPECT_NE(faulty.str().find("FAIL"), std::string::npos);
  // the fault does not outlive the call
  Owned again;
  ASSERT_EQ(oct1d_gradcheck(0, 1, nullptr, &again.s, &ok), OCT1D_OK);
  EXPECT_EQ(ok, 1);
}

TEST(CApi, Ablate) {
  oct1d_dataset* ds = nullptr;
  ASSERT_EQ(oct1d_dataset_load("synth:sine:4:16:6", nullptr, &ds), OCT1D_OK);
  const oct1d_model_spec s = spec("fcn", 3, 16);
  oct1d_model* m = nullptr;
  ASSERT_EQ(oct1d_model_new(&s, &m), OCT1D_OK);
  oct1d_ablation_options o;
  oct1d_ablation_options_init(&o);
  EXPECT_EQ(o.filters_per_layer, 8u);
  o.filters_per_layer = 500;
  const fs::path out = fs::temp_directory_path() / "oct1d_capi_ablate";
  fs::remove_all(out);
  Owned report;
  ASSERT_EQ(oct1d_ablate(m, ds, out.string().c_str(), &o, &report.s), OCT1D_OK) << oct1d_last_error();
  EXPECT_NE(report.str().find("feature_accuracy"), std::string::npos);
  EXPECT_NE(report.str().find("warnings"), std::string::npos);
  EXPECT_TRUE(fs::exists(out / "activations.csv"));
  oct1d_model_free(m);
  oct1d_dataset_free(ds);
}
