#include <gtest/gtest.h>
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
};

// Runs the CLI with stderr merged into stdout.
Result run(const std::string& args) {
  const std::string cmd = std::string(OCT1D_CLI) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  Result r{-1, {}};
  std::array<char, 4096> buf;
  while (const std::size_t n = std::fread(buf.data(), 1, buf.size(), p)) r.out.append(buf.data(), n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::vector<std::string> lines(const fs::path& path) {
  std::ifstream is(path);
  std::vector<std::string> out;
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

std::vector<std::string> column(const std::vector<std::string>& rows, std::size_t col) {
  std::vector<std::string> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    std::stringstream ss(rows[i]);
    std::string cell;
    for (std::size_t c = 0; c <= col; ++c) std::getline(ss, cell, ',');
    out.push_back(cell);
  }
  return out;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("oct1d_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const std::string kToy = "--dataset synth:sine:6:32:1 --epochs 3";

}  // namespace

TEST(Cli, HelpExitsZero) {
  const Result r = run("--help");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("train"), std::string::npos);
  EXPECT_NE(r.out.find("gradcheck"), std::string::npos);
}

TEST(Cli, UnknownModelIsConfigErrorNamingTheField) {
  const Result r = run("train --dataset synth:sine:6:32:1 --model densenet");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("--model"), std::string::npos);
}

TEST(Cli, MissingSubcommandAndBadValuesExitTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("train --dataset synth:sine:6:32:1 --model fcn --alpha 1.5").code, 2);
  const Result r = run("train --dataset synth:sine:6:32:1 --model fcn --batch-size 0");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("--batch-size"), std::string::npos);
}

TEST(Cli, TrainAppendsOneRecordPerRun) {
  const fs::path dir = scratch("train");
  const Result r = run("train " + kToy + " --model octfcn --runs 2 --out " + dir.string());
  ASSERT_EQ(r.code, 0) << r.out;
  auto rows = lines(dir / "runs.csv");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], "dataset,model,run,seed,accuracy,params,epochs,seconds");
  EXPECT_EQ(column(rows, 1), (std::vector<std::string>{"octfcn", "octfcn"}));
  EXPECT_EQ(column(rows, 3), (std::vector<std::string>{"0", "1"}));
  EXPECT_NE(r.out.find("mean accuracy"), std::string::npos);

  ASSERT_EQ(run("train " + kToy + " --model octfcn --runs 2 --out " + dir.string()).code, 0);
  rows = lines(dir / "runs.csv");
  ASSERT_EQ(rows.size(), 5u);
  const auto acc = column(rows, 4);
  EXPECT_EQ(acc[0], acc[2]);
  EXPECT_EQ(acc[1], acc[3]);
}

TEST(Cli, ConfigFileWithFlagOverride) {
  const fs::path dir = scratch("config");
  {
    std::ofstream cfg(dir / "run.cfg");
    cfg << "# toy run\n"
        << "dataset = synth:square:4:32:2\n"
        << "model = fcn\n"
        << "epochs = 2\n"
        << "runs = 3\n"
        << "out = " << (dir / "ignored").string() << "\n";
  }
  const Result r = run("train --config " + (dir / "run.cfg").string() + " --runs 1 --out " + (dir / "res").string());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto rows = lines(dir / "res" / "runs.csv");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(column(rows, 6), std::vector<std::string>{"2"});
  EXPECT_FALSE(fs::exists(dir / "ignored"));

  std::ofstream(dir / "bad.cfg") << "epochs 2\n";
  const Result bad = run("train --config " + (dir / "bad.cfg").string() + " --model fcn --dataset synth:sine:4:32:1");
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.out.find("bad.cfg:1"), std::string::npos);
}

TEST(Cli, CompareWritesReports) {
  const fs::path dir = scratch("compare");
  for (const char* ds : {"synth:sine:4:32:1", "synth:square:4:32:2", "synth:sine:4:32:3"})
    for (const char* m : {"fcn", "octfcn"})
      ASSERT_EQ(run(std::string("train --dataset ") + ds + " --epochs 2 --runs 2 --model " + m + " --out " +
                    (dir / "res").string())
                    .code,
                0);
  const Result r =
      run("compare --results " + (dir / "res" / "runs.csv").string() + " --out " + (dir / "rep").string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(dir / "rep" / "wsrt_fcn_vs_octfcn.json"));
  EXPECT_TRUE(fs::exists(dir / "rep" / "cd.svg"));
  EXPECT_EQ(run("compare --results " + (dir / "res" / "runs.csv").string() + " --metric median").code, 2);
}

TEST(Cli, CompareNeedsTwoModels) {
  const fs::path dir = scratch("compare1");
  ASSERT_EQ(run("train " + kToy + " --model fcn --runs 1 --out " + dir.string()).code, 0);
  EXPECT_EQ(run("compare --results " + (dir / "runs.csv").string() + " --out " + (dir / "rep").string()).code, 3);
}

TEST(Cli, GradcheckPassesAndFaultFails) {
  const Result ok = run("gradcheck --shapes 1");
  EXPECT_EQ(ok.code, 0) << ok.out;
  EXPECT_NE(ok.out.find("all families passed"), std::string::npos);
  const Result bad = run("gradcheck --shapes 1 --fault lstm");
  EXPECT_EQ(bad.code, 3);
  EXPECT_NE(bad.out.find("FAIL"), std::string::npos);
}

TEST(Cli, AblateWritesUnderDatasetAndModel) {
  const fs::path dir = scratch("ablate");
  const Result r = run("ablate " + kToy + " --model octfcn --filters 3 --out " + dir.string());
  ASSERT_EQ(r.code, 0) << r.out;
  const fs::path out = dir / "synth-sine-6-32-1" / "octfcn";
  for (const char* f : {"svm_report.json", "activations.csv", "features_train.csv", "layer1.svg"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
}

TEST(Cli, DivergenceExitsThree) {
  const fs::path dir = scratch("diverge");
  const Result r = run("train " + kToy + " --model fcn --lr 1e300 --runs 1 --out " + dir.string());
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.out.find("epoch"), std::string::npos);
}

TEST(Cli, MissingDatasetExitsThree) {
  const fs::path dir = scratch("missing");
  const Result r = run("train --dataset NoSuchSet --data-dir " + dir.string() + " --model fcn --out " + dir.string());
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.out.find("NoSuchSet"), std::string::npos);
}
