#include <unistd.h>
#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>

#include "ipguard/remote_oracle.hpp"
#include "ipguard/train.hpp"
#include "ipguard/verify.hpp"
#include "support/oracles.hpp"

namespace ipguard {
namespace {

/// Answers a fixed label sequence by point index (first coordinate encodes the index).
class ScriptedOracle final : public ClassifierOracle {
 public:
  explicit ScriptedOracle(std::vector<std::size_t> answers, long fail_at = -1)
      : answers_(std::move(answers)), fail_at_(fail_at) {}
  std::size_t input_dim() const override { return 1; }
  std::size_t query(std::span<const double> x) const override {
    const auto idx = static_cast<std::size_t>(std::lround(x[0] * 1000.0));
    if (static_cast<long>(idx) == fail_at_) throw std::runtime_error("backend unavailable");
    return answers_[idx];
  }
  OracleDescriptor descriptor() const override { return {"scripted", ""}; }

 private:
  std::vector<std::size_t> answers_;
  long fail_at_;
};

Fingerprint indexed_fingerprint(std::vector<std::size_t> labels) {
  Fingerprint fp;
  fp.d = 1;
  for (std::size_t p = 0; p < labels.size(); ++p) fp.points.push_back(static_cast<double>(p) / 1000.0);
  fp.labels = std::move(labels);
  return fp;
}

TEST(MatchingRate, HalfMatch) {
  const auto fp = indexed_fingerprint({1, 2, 3, 4});
  const ScriptedOracle oracle({1, 2, 0, 0});
  const auto r = match(fp, oracle, 2);
  EXPECT_EQ(r.matched, 2u);
  EXPECT_EQ(r.total, 4u);
  EXPECT_EQ(r.rate(), 0.5);
  EXPECT_EQ(r.mask, (std::vector<bool>{true, true, false, false}));
}

TEST(MatchingRate, SelfMatchIsOne) {
  SyntheticSpec spec;
  spec.c = 3;
  spec.d = 3;
  spec.seed = 1;
  const auto data = generate(spec);
  const auto net = make_architecture("tiny-MLP", 3, 3, 1);
  ExtractConfig cfg;
  cfg.n = 40;
  cfg.seed = 2;
  const auto fp = extract_ipguard(net, data, cfg);
  const NetworkOracle oracle(net);
  EXPECT_EQ(matching_rate(fp, oracle, 3), 1.0);
}

TEST(MatchingRate, PermutationInvariant) {
  Rng rng(6);
  std::vector<std::size_t> labels(50), answers(50);
  for (auto& l : labels) l = rng.below(3);
  for (auto& a : answers) a = rng.below(3);
  const auto base = matching_rate(indexed_fingerprint(labels), ScriptedOracle(answers));
  std::vector<std::size_t> perm(50);
  for (std::size_t p = 0; p < 50; ++p) perm[p] = p;
  for (int trial = 0; trial < 20; ++trial) {
    rng.shuffle(perm.begin(), perm.end());
    std::vector<std::size_t> pl(50), pa(50);
    for (std::size_t p = 0; p < 50; ++p) {
      pl[p] = labels[perm[p]];
      pa[p] = answers[perm[p]];
    }
    EXPECT_EQ(matching_rate(indexed_fingerprint(pl), ScriptedOracle(pa)), base);
  }
}

TEST(MatchingRate, OracleFailureNamesPoint) {
  const auto fp = indexed_fingerprint({0, 0, 0, 0, 0});
  const ScriptedOracle oracle({0, 0, 0, 0, 0}, 3);
  try {
    match(fp, oracle, 2);
    FAIL() << "expected QueryError";
  } catch (const QueryError& e) {
    EXPECT_EQ(e.point_index(), 3u);
    EXPECT_NE(std::string(e.what()).find("point 3"), std::string::npos);
  }
}

TEST(MatchingRate, DimensionMismatch) {
  auto fp = indexed_fingerprint({0});
  fp.d = 2;
  fp.points = {0.0, 0.0};
  EXPECT_THROW(match(fp, ScriptedOracle({0})), InputError);
}

MatchResult with_rate(std::size_t m, std::size_t n) { return {m, n, std::vector<bool>(n, false)}; }

TEST(Verify, ThresholdRule) {
  EXPECT_EQ(decide(with_rate(70, 100), 0.70).decision, 1);
  EXPECT_EQ(decide(with_rate(69, 100), 0.70).decision, 0);
  EXPECT_EQ(decide(with_rate(0, 100), 0.0).decision, 1);
  EXPECT_EQ(decide(with_rate(7, 10), 0.7).decision, 1);
  EXPECT_THROW(decide(with_rate(1, 2), 1.5), InputError);
  EXPECT_THROW(decide(with_rate(1, 2), -0.1), InputError);
}

TEST(Verify, DecisionStepsDownOnceAtTheRate) {
  for (std::size_t m = 0; m <= 20; ++m) {
    const auto r = with_rate(m, 20);
    int prev = 1;
    for (int t = 0; t <= 1000; ++t) {
      const double tau = t / 1000.0;
      const int d = decide(r, tau).decision;
      EXPECT_LE(d, prev);
      EXPECT_EQ(d, r.rate() >= tau ? 1 : 0);
      prev = d;
    }
  }
}

TEST(Verify, VerdictJson) {
  const auto v = verify(indexed_fingerprint({1, 2, 3, 4}), ScriptedOracle({1, 2, 0, 0}), 0.5);
  const auto j = to_json(v);
  EXPECT_EQ(j.at("m"), 2);
  EXPECT_EQ(j.at("n"), 4);
  EXPECT_EQ(j.at("decision"), 1);
  EXPECT_EQ(j.at("matching_rate"), 0.5);
  EXPECT_EQ(j.at("mask").size(), 4u);
}

class RemoteOracleTest : public ::testing::Test {
 protected:
  static inline std::filesystem::path dir;
  static inline Network net;
  static inline Fingerprint fp;

  static void SetUpTestSuite() {
    dir = std::filesystem::temp_directory_path() / ("ipguard_remote_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    const auto data = testing::separated_blobs(40, 2);
    net = train(make_architecture("tiny-MLP", 2, 2, 4), data, TrainConfig{});
    save_model(net, (dir / "m.bmk").string());
    ExtractConfig cfg;
    cfg.n = 15;
    cfg.seed = 3;
    fp = extract_ipguard(net, data, cfg);
  }
  static void TearDownTestSuite() { std::filesystem::remove_all(dir); }

  RemoteOracleConfig config(std::vector<std::string> extra = {}) {
    RemoteOracleConfig c;
    c.command = {IPGUARD_STUB_PATH, (dir / "m.bmk").string()};
    c.command.insert(c.command.end(), extra.begin(), extra.end());
    c.input_dim = 2;
    return c;
  }
};

TEST_F(RemoteOracleTest, MatchesLocalOracle) {
  const SubprocessOracle remote(config());
  EXPECT_FALSE(remote.concurrent_queries());
  EXPECT_EQ(remote.descriptor().kind, "remote");
  const auto v = verify(fp, remote, 0.9, 4);
  EXPECT_EQ(v.matching_rate, 1.0);
  EXPECT_EQ(v.decision, 1);
}

TEST_F(RemoteOracleTest, RecoversFromGarbageWithRetry) {
  const SubprocessOracle remote(config({"--garbage-at", "2"}));
  // every garbage reply costs one retry and a restart
  EXPECT_EQ(matching_rate(fp, remote), 1.0);
}

TEST_F(RemoteOracleTest, TimeoutBecomesQueryError) {
  auto cfg = config({"--delay-ms", "1000"});
  cfg.timeout_ms = 100;
  cfg.retries = 1;
  const SubprocessOracle remote(cfg);
  try {
    match(fp, remote);
    FAIL() << "expected QueryError";
  } catch (const QueryError& e) {
    EXPECT_EQ(e.point_index(), 0u);
    EXPECT_NE(std::string(e.what()).find("timed out"), std::string::npos) << e.what();
  }
}

TEST_F(RemoteOracleTest, MissingExecutableFails) {
  RemoteOracleConfig cfg;
  cfg.command = {"/nonexistent/oracle"};
  cfg.retries = 0;
  const SubprocessOracle remote(cfg);
  EXPECT_THROW(match(fp, remote), QueryError);
}

}  // namespace
}  // namespace ipguard
