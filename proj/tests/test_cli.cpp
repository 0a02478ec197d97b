#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "mrgp/data.hpp"

namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = 0;
  std::string out, err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "mrgp");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = mrgp::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("mrgp_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // Small multiscale dataset with T rows.
  std::string simulate(long T, const std::string& name = "data.csv") {
    std::ofstream(path("cfg.json")) << "{\"T\": " << T << "}";
    const CliRun r = run({"simulate", "--kind", "multiscale", "--config", path("cfg.json"), "--out", path(name), "--seed", "3"});
    EXPECT_EQ(r.code, 0) << r.err;
    return path(name);
  }

  std::vector<std::string> quick_fit() const {
    return {"--iters", "3", "--batch", "10", "--buffer", "2", "--samples", "2", "--minibatches", "1",
            "--cache-samples", "2", "--inducing", "4", "--lr", "0.01"};
  }

  CliRun train(const std::string& data, const std::string& out, const std::string& comps = "R=2:d=1") {
    std::vector<std::string> a = {"train", "--data", data, "--components", comps, "--seed", "11", "--out", out};
    for (const auto& s : quick_fit()) a.push_back(s);
    return run(a);
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, SimulateWritesDataAndTruth) {
  const std::string d = simulate(120);
  const mrgp::Dataset data = mrgp::read_csv(d);
  EXPECT_EQ(data.length(), 120);
  EXPECT_EQ(data.input_dim(), 2);
  const mrgp::Table truth = mrgp::read_table(path("data_truth.csv"));
  EXPECT_EQ(truth.header, (std::vector<std::string>{"t", "fast", "slow", "noise"}));
  EXPECT_EQ(truth.rows.rows(), 120);
}

TEST_F(Cli, SimulatePendulumTruth) {
  std::ofstream(path("p.json")) << R"({"T_out": 50})";
  const CliRun r = run({"simulate", "--kind", "pendulum", "--config", path("p.json"), "--out", path("p.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(mrgp::read_csv(path("p.csv")).length(), 50);
  EXPECT_EQ(mrgp::read_table(path("p_truth.csv")).header, (std::vector<std::string>{"t", "theta", "omega"}));
}

TEST_F(Cli, SimulateIsDeterministic) {
  simulate(80, "a.csv");
  simulate(80, "b.csv");
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run({"simulate", "--kind", "weather", "--out", path("x.csv")}).code, 2);
  EXPECT_EQ(run({"bogus"}).code, 2);
  const std::string d = simulate(60);
  const CliRun r = run({"train", "--data", d, "--components", "R=1:d=1", "--out", path("m")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("seed"), std::string::npos);
  EXPECT_EQ(run({"--help"}).code, 0);
  std::ofstream(path("bad.json")) << R"({"nope": 1})";
  EXPECT_EQ(run({"simulate", "--kind", "multiscale", "--config", path("bad.json"), "--out", path("y.csv")}).code, 2);
}

TEST_F(Cli, TrainRejectsShortSeriesWithMinimumLength) {
  const std::string d = simulate(50);
  const CliRun r = train(d, path("m"), "R=6:d=1");
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("60"), std::string::npos) << r.err;
}

TEST_F(Cli, TrainWritesArtifactsDeterministically) {
  const std::string d = simulate(60);
  ASSERT_EQ(train(d, path("m1")).code, 0);
  ASSERT_EQ(train(d, path("m2")).code, 0);
  for (const char* f : {"model.json", "train_log.csv", "manifest.json"}) EXPECT_TRUE(fs::exists(path("m1") + "/" + f)) << f;
  EXPECT_EQ(slurp(path("m1/model.json")), slurp(path("m2/model.json")));
  const std::string log = slurp(path("m1/train_log.csv"));
  EXPECT_EQ(log.rfind("cycle,component,iter,elbo,lr,wall_ms", 0), 0u);
  const std::string manifest = slurp(path("m1/manifest.json"));
  for (const char* key : {"\"seed\"", "\"argv\"", "\"git_describe\"", "\"sha256\"", "\"config\""})
    EXPECT_NE(manifest.find(key), std::string::npos) << key;
}

TEST_F(Cli, PredictAndEvaluate) {
  const std::string d = simulate(60);
  ASSERT_EQ(train(d, path("m")).code, 0);
  const CliRun p = run({"predict", "--model", path("m/model.json"), "--data", d, "--out", path("pred.csv"), "--seed", "1",
                     "--samples", "3"});
  ASSERT_EQ(p.code, 0) << p.err;
  const mrgp::Table pred = mrgp::read_table(path("pred.csv"));
  EXPECT_EQ(pred.header, (std::vector<std::string>{"t", "mean_y1", "var_y1"}));
  EXPECT_EQ(pred.rows.rows(), 60);
  const CliRun e = run({"eval", "--pred", path("pred.csv"), "--data", d, "--model", path("m/model.json"), "--from", "30",
                     "--out", path("metrics.json")});
  ASSERT_EQ(e.code, 0) << e.err;
  const std::string metrics = slurp(path("metrics.json"));
  EXPECT_NE(metrics.find("\"rmse\""), std::string::npos);
  EXPECT_NE(metrics.find("\"rows\": 30"), std::string::npos);
}

TEST_F(Cli, IncompatibleInputsExitThree) {
  const std::string d = simulate(60);
  ASSERT_EQ(train(d, path("m")).code, 0);
  std::ofstream(path("pcfg.json")) << R"({"T_out": 60})";
  ASSERT_EQ(run({"simulate", "--kind", "pendulum", "--config", path("pcfg.json"), "--out", path("p.csv")}).code, 0);
  EXPECT_EQ(run({"predict", "--model", path("m/model.json"), "--data", path("p.csv"), "--out", path("x.csv"), "--seed",
                 "1"}).code,
            3);
  ASSERT_EQ(run({"predict", "--model", path("m/model.json"), "--data", d, "--out", path("pred.csv"), "--seed", "1",
                 "--samples", "2"}).code,
            0);
  const std::string shorter = simulate(50, "short.csv");
  EXPECT_EQ(run({"eval", "--pred", path("pred.csv"), "--data", shorter, "--raw"}).code, 3);
}

TEST_F(Cli, MalformedDataExitsTwo) {
  std::ofstream(path("bad.csv")) << "t,y1\n0,1\n1,2\n3,4\n";
  EXPECT_EQ(train(path("bad.csv"), path("m")).code, 2);
}

TEST_F(Cli, GridsearchTable) {
  const std::string d = simulate(80);
  std::vector<std::string> a = {"gridsearch", "--data", d, "--grid", "3,1,2", "--seed", "5", "--out", path("grid.csv"),
                                "--dim", "1", "--predict-samples", "2"};
  for (const auto& s : quick_fit()) a.push_back(s);
  const CliRun r = run(a);
  ASSERT_EQ(r.code, 0) << r.err;
  const mrgp::Table t = mrgp::read_table(path("grid.csv"));
  EXPECT_EQ(t.header, (std::vector<std::string>{"R", "rmse", "nll"}));
  ASSERT_EQ(t.rows.rows(), 3);
  EXPECT_EQ(t.rows.col(0), Eigen::Vector3d(1, 2, 3));
  const std::string lng = slurp(path("grid_long.csv"));
  EXPECT_EQ(std::count(lng.begin(), lng.end(), '\n'), 7);
}

TEST_F(Cli, VerifyReportAndMutation) {
  const CliRun ok = run({"verify", "--seed", "2", "--out", path("v.json")});
  EXPECT_EQ(ok.code, 0) << ok.out;
  EXPECT_NE(slurp(path("v.json")).find("\"passed\": true"), std::string::npos);
  const CliRun bad = run({"verify", "--seed", "2", "--mutate-kernel-rescaling"});
  EXPECT_EQ(bad.code, 1);
}
