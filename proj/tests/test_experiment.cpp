#include <unistd.h>
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "ipguard/experiment.hpp"

namespace ipguard {
namespace {

namespace fs = std::filesystem;

nlohmann::json small_config() {
  return nlohmann::json::parse(R"({
    "seed": 3,
    "dataset": {"kind": "blobs", "c": 3, "d": 8, "n_per_class": 40, "noise_sigma": 0.2},
    "train_fraction": 0.75,
    "target": {"arch": "small-MLP", "train": {"epochs": 20, "batch_size": 16}},
    "suite": {"n_same_arch": 2, "n_diff_arch": 1, "n_forests": 1, "n_trees": 5,
              "weight_ladder": false, "filter_ladder": true,
              "finetune": {"learning_rate": 0.001, "epochs": 3}},
    "fingerprint": {"n": 20},
    "r": 50,
    "methods": [
      {"method": "ipguard", "init": "T", "label": "L", "sweep": {"k": [0, 1, 4]}},
      {"method": "random"}
    ]
  })");
}

const ExperimentReport& small_report() {
  static const ExperimentReport rep = run_experiment(experiment_config_from_json(small_config()));
  return rep;
}

TEST(Experiment, SweepArgmaxContract) {
  const auto& rep = small_report();
  const auto& s = rep.sweep("ipguard-TL");
  ASSERT_EQ(s.reports.size(), 3u);
  EXPECT_EQ(s.parameter, "k");
  for (const auto& r : s.reports) {
    EXPECT_LE(r.aruc, s.reports[s.best_index].aruc);
    EXPECT_EQ(r.curve.size(), 50u);
  }
  for (std::size_t v = 0; v < s.best_index; ++v) EXPECT_LT(s.reports[v].aruc, s.reports[s.best_index].aruc);
  EXPECT_EQ(rep.sweep("random").reports.size(), 1u);
  EXPECT_THROW(rep.sweep("fgsm-TL"), InputError);
  const auto j = to_json(rep);
  EXPECT_EQ(j.at("sweeps").at(0).at("best_aruc"), s.reports[s.best_index].aruc);
}

TEST(Experiment, RerunIsIdenticalAndThreadIndependent) {
  auto cfg = experiment_config_from_json(small_config());
  cfg.threads = 3;
  const auto again = run_experiment(cfg);
  EXPECT_EQ(without_timing(to_json(again)).dump(), without_timing(to_json(small_report())).dump());
}

TEST(Experiment, EveryStageErrorIsTagged) {
  auto j = small_config();
  j["methods"][0]["max_iters"] = 5;
  j["methods"][0]["lr"] = -1.0;
  try {
    run_experiment(experiment_config_from_json(j));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(std::string(e.what()).rfind("extract/ipguard-TL:", 0), 0u) << e.what();
    EXPECT_EQ(e.kind(), ErrorKind::input);
  }
  j = small_config();
  j["target"]["train"]["batch_size"] = 100000;
  try {
    run_experiment(experiment_config_from_json(j));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(std::string(e.what()).rfind("train:", 0), 0u) << e.what();
  }
}

TEST(ExperimentConfig, Validation) {
  auto j = small_config();
  j["methods"] = nlohmann::json::array();
  EXPECT_THROW(experiment_config_from_json(j), InputError);
  j = small_config();
  j["methods"][0]["sweep"] = {{"alpha", {0.1}}};
  EXPECT_THROW(experiment_config_from_json(j), InputError);
  j = small_config();
  j.erase("seed");
  EXPECT_THROW(experiment_config_from_json(j), FormatError);
}

class ReportFiles : public ::testing::Test {
 protected:
  fs::path dir = fs::temp_directory_path() / ("ipguard_reports_" + std::to_string(::getpid()));
  void SetUp() override { fs::create_directories(dir); }
  void TearDown() override { fs::remove_all(dir); }
};

TEST_F(ReportFiles, JsonRoundTrip) {
  const auto& r = small_report().sweep("ipguard-TL").reports[0];
  const auto path = (dir / "r.json").string();
  emit_report(r, "json", path);
  EXPECT_EQ(eval_report_from_json(nlohmann::json::parse(read_file(path))), r);
}

TEST_F(ReportFiles, CsvShape) {
  const auto& r = small_report().sweep("random").reports[0];
  const auto path = (dir / "r.csv").string();
  emit_report(r, "csv", path);
  std::ifstream in(path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  ASSERT_EQ(lines.size(), r.curve.size() + 2);
  EXPECT_EQ(lines.front(), "tau,R,U,min");
  EXPECT_EQ(lines.back().rfind("summary,", 0), 0u);
  // rows parse back to the curve values
  for (std::size_t t = 0; t < r.curve.size(); ++t) {
    double tau, R, U, m;
    char c;
    std::istringstream ss(lines[t + 1]);
    ss >> tau >> c >> R >> c >> U >> c >> m;
    EXPECT_EQ(tau, r.curve[t].tau);
    EXPECT_EQ(R, r.curve[t].robustness);
    EXPECT_EQ(U, r.curve[t].uniqueness);
  }
}

TEST_F(ReportFiles, UnknownFormat) {
  const auto& r = small_report().sweep("random").reports[0];
  EXPECT_THROW(emit_report(r, "xml", (dir / "r.xml").string()), InputError);
}

}  // namespace
}  // namespace ipguard
