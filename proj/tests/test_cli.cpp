#include <unistd.h>
#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>

#include "ipguard/experiment.hpp"

namespace ipguard {
namespace {

namespace fs = std::filesystem;

struct Run {
  int code;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(IPGUARD_CLI_PATH) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return {-1, ""};
  std::string out;
  char buf[4096];
  while (const auto n = fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

class Cli : public ::testing::Test {
 protected:
  static inline fs::path dir;

  static std::string p(const std::string& name) { return (dir / name).string(); }

  static void SetUpTestSuite() {
    dir = fs::temp_directory_path() / ("ipguard_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    ASSERT_EQ(run("data --kind blobs --classes 3 --dim 4 --n-per-class 40 --noise 0.2 --seed 1 --out " + p("d.csv")).code, 0);
    ASSERT_EQ(run("train --data " + p("d.csv") + " --epochs 20 --seed 2 --out " + p("t.bmk")).code, 0);
    ASSERT_EQ(run("train --data " + p("d.csv") + " --arch tiny-MLP --epochs 5 --seed 3 --out " + p("o.bmk")).code, 0);
  }
  static void TearDownTestSuite() { fs::remove_all(dir); }
};

TEST_F(Cli, ExtractDefaultsToHundredPoints) {
  const auto r = run("extract --model " + p("t.bmk") + " --data " + p("d.csv") + " --seed 4 --out " + p("fp.json"));
  ASSERT_EQ(r.code, 0);
  const auto fp = load_fingerprint(p("fp.json"));
  EXPECT_EQ(fp.size(), 100u);
  EXPECT_EQ(fp.params.tag(), "ipguard-TL");
  EXPECT_EQ(nlohmann::json::parse(r.out).at("n"), 100);
}

TEST_F(Cli, ExtractMethodSuffixes) {
  for (const char* m : {"random", "fgsm-RL", "igsm-TR", "ipguard-RR"}) {
    const auto r = run(std::string("extract --method ") + m + " --n 5 --model " + p("t.bmk") + " --data " +
                       p("d.csv") + " --seed 4 --out " + p("m.json"));
    ASSERT_EQ(r.code, 0) << m;
    EXPECT_EQ(load_fingerprint(p("m.json")).params.tag(), m);
  }
  EXPECT_EQ(run("extract --method pgd --model " + p("t.bmk") + " --seed 1 --out " + p("x.json")).code, 2);
  EXPECT_EQ(run("extract --init Q --model " + p("t.bmk") + " --seed 1 --out " + p("x.json")).code, 2);
}

TEST_F(Cli, VerifyPrintsVerdictAndNeverFailsOnDecision) {
  ASSERT_EQ(run("extract --n 30 --model " + p("t.bmk") + " --data " + p("d.csv") + " --seed 5 --out " + p("v.json")).code, 0);
  auto r = run("verify --fingerprint " + p("v.json") + " --model " + p("t.bmk") + " --tau 0.9");
  ASSERT_EQ(r.code, 0);
  auto v = nlohmann::json::parse(r.out);
  EXPECT_EQ(v.at("matching_rate"), 1.0);
  EXPECT_EQ(v.at("decision"), 1);
  EXPECT_EQ(v.at("mask").size(), 30u);
  r = run("verify --fingerprint " + p("v.json") + " --model " + p("o.bmk") + " --tau 1.0");
  ASSERT_EQ(r.code, 0);
  v = nlohmann::json::parse(r.out);
  EXPECT_EQ(v.at("decision"), v.at("matching_rate").get<double>() >= 1.0 ? 1 : 0);
}

TEST_F(Cli, VerifyRemoteOracle) {
  ASSERT_EQ(run("extract --n 10 --model " + p("t.bmk") + " --data " + p("d.csv") + " --seed 6 --out " + p("r.json")).code, 0);
  const auto r = run("verify --fingerprint " + p("r.json") + " --remote '" + std::string(IPGUARD_STUB_PATH) + " " +
                     p("t.bmk") + "' --remote-dim 4 --tau 0.5");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(nlohmann::json::parse(r.out).at("matching_rate"), 1.0);
}

TEST_F(Cli, VerifyWithoutThresholdIsUsageError) {
  ASSERT_EQ(run("extract --n 5 --model " + p("t.bmk") + " --data " + p("d.csv") + " --seed 5 --out " + p("u.json")).code, 0);
  EXPECT_EQ(run("verify --fingerprint " + p("u.json") + " --model " + p("t.bmk")).code, 2);
  EXPECT_EQ(run("verify --fingerprint " + p("u.json") + " --model " + p("t.bmk") + " --tau 1.5").code, 3);
}

TEST_F(Cli, SuiteEvaluateAndCalibratedVerify) {
  ASSERT_EQ(run("suite --model " + p("t.bmk") + " --data " + p("d.csv") +
                " --n-same-arch 2 --n-diff-arch 1 --n-forests 1 --trees 3 --epochs 5 --seed 7 --out " + p("suite"))
                .code,
            0);
  ASSERT_EQ(run("extract --n 20 --model " + p("t.bmk") + " --data " + p("d.csv") + " --seed 8 --out " + p("e.json")).code, 0);
  ASSERT_EQ(run("evaluate --fingerprint " + p("e.json") + " --suite " + p("suite/manifest.json") + " --out " +
                p("eval.json"))
                .code,
            0);
  const auto rep = eval_report_from_json(nlohmann::json::parse(read_file(p("eval.json"))));
  EXPECT_EQ(rep.curve.size(), 100u);
  ASSERT_EQ(run("evaluate --fingerprint " + p("e.json") + " --suite " + p("suite/manifest.json") +
                " --format csv --r 20 --out " + p("eval.csv"))
                .code,
            0);
  const auto r = run("verify --fingerprint " + p("e.json") + " --model " + p("t.bmk") + " --calibration " + p("eval.json"));
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(nlohmann::json::parse(r.out).at("tau"), rep.calibrated_tau);
  EXPECT_EQ(run("evaluate --fingerprint " + p("e.json") + " --suite " + p("suite/manifest.json") +
                " --format xml --out " + p("eval.xml"))
                .code,
            2);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("--help").code, 0);
  EXPECT_EQ(run("bogus").code, 2);
  EXPECT_EQ(run("train --data /nonexistent.csv --seed 1 --out " + p("x.bmk")).code, 2);
  write_file(p("bad.bmk"), "definitely not a model");
  EXPECT_EQ(run("extract --model " + p("bad.bmk") + " --seed 1 --out " + p("x.json")).code, 3);
  write_file(p("bad.csv"), "0,1,0\n0.5,x,1\n");
  EXPECT_EQ(run("train --data " + p("bad.csv") + " --seed 1 --out " + p("x.bmk")).code, 3);
  EXPECT_EQ(run("train --data " + p("d.csv") + " --lr 1e300 --epochs 3 --seed 1 --out " + p("x.bmk")).code, 4);
}

TEST_F(Cli, BundledExperimentWritesReport) {
  const auto out = p("exp");
  const auto r = run("experiment --config " + std::string(IPGUARD_CONFIG_DIR) + "/blobs_experiment.json --out " + out);
  ASSERT_EQ(r.code, 0);
  ASSERT_TRUE(fs::exists(out + "/report.json"));
  const auto j = nlohmann::json::parse(read_file(out + "/report.json"));
  EXPECT_EQ(j.at("sweeps").size(), 2u);
  EXPECT_EQ(j.at("sweeps").at(0).at("results").size(), 7u);
}

}  // namespace
}  // namespace ipguard
