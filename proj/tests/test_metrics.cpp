#include <gtest/gtest.h>

#include "ipguard/metrics.hpp"
#include "ipguard/random.hpp"
#include "support/oracles.hpp"

namespace ipguard {
namespace {

using V = std::vector<double>;

TEST(Robustness, Examples) {
  EXPECT_EQ(robustness(V{1, 1, 1}, 0.9), 1.0);
  EXPECT_EQ(robustness(V{0.6, 0.4}, 0.5), 0.5);
  EXPECT_EQ(robustness(V{0.0, 0.2, 0.1}, 0.0), 1.0);
  EXPECT_THROW(robustness(V{}, 0.5), InputError);
  EXPECT_THROW(robustness(V{1.2}, 0.5), InputError);
}

TEST(Uniqueness, Examples) {
  EXPECT_EQ(uniqueness(V{0, 0}, 0.01), 1.0);
  EXPECT_EQ(uniqueness(V{0.5}, 0.5), 0.0);
  EXPECT_EQ(uniqueness(V{1.0}, 1.0), 0.0);
  EXPECT_THROW(uniqueness(V{}, 0.5), InputError);
}

TEST(Aruc, Examples) {
  EXPECT_EQ(aruc(V{1, 1, 1}, V{0, 0}), 1.0);
  EXPECT_NEAR(aruc(V{0.6}, V{0.4}), 0.20, 1e-15);
  EXPECT_THROW(aruc(V{}, V{0.1}), InputError);
  EXPECT_THROW(aruc(V{0.1}, V{}), InputError);
}

TEST(Aruc, MatchesIntegerEnumeration) {
  Rng rng(55);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<int> pi(1 + rng.below(6)), ni(1 + rng.below(6));
    V p, n;
    for (auto& m : pi) p.push_back((m = static_cast<int>(rng.below(101))) / 100.0);
    for (auto& m : ni) n.push_back((m = static_cast<int>(rng.below(101))) / 100.0);
    EXPECT_NEAR(aruc(p, n), testing::brute_force_aruc_hundredths(pi, ni, 100), 1e-12);
  }
}

TEST(Aruc, CurveProperties) {
  Rng rng(56);
  for (int trial = 0; trial < 300; ++trial) {
    V p(1 + rng.below(8)), n(1 + rng.below(8));
    for (double& v : p) v = static_cast<double>(rng.below(21)) / 20.0;
    for (double& v : n) v = static_cast<double>(rng.below(21)) / 20.0;
    const auto curve = ru_curve(p, n, 100);
    ASSERT_EQ(curve.size(), 100u);
    double bound = 1.0;
    bool all_one = true;
    for (std::size_t t = 0; t < curve.size(); ++t) {
      EXPECT_EQ(curve[t].tau, static_cast<double>(t + 1) / 100.0);
      if (t > 0) {
        EXPECT_LE(curve[t].robustness, curve[t - 1].robustness);
        EXPECT_GE(curve[t].uniqueness, curve[t - 1].uniqueness);
      }
      bound = std::min(bound, std::max(curve[t].robustness, curve[t].uniqueness));
      all_one = all_one && curve[t].robustness == 1.0 && curve[t].uniqueness == 1.0;
    }
    const double a = aruc_from_curve(curve);
    EXPECT_LE(a, bound + 1e-15);
    EXPECT_EQ(a == 1.0, all_one);
    V pp = p, nn = n;
    pp.insert(pp.end(), p.begin(), p.end());
    nn.insert(nn.end(), n.begin(), n.end());
    EXPECT_NEAR(aruc(pp, n), a, 1e-15);
    EXPECT_NEAR(aruc(p, nn), a, 1e-15);
  }
}

TEST(Auc, Examples) {
  EXPECT_EQ(auc(V{1}, V{0}), 1.0);
  EXPECT_EQ(auc(V{0.3, 0.7}, V{0.3, 0.7}), 0.5);
  EXPECT_EQ(auc(V{0}, V{1}), 0.0);
  EXPECT_EQ(auc(V{0.5, 0.9}, V{0.5}), 0.75);
}

TEST(Gap, Examples) {
  EXPECT_NEAR(gap(V{1.0, 0.7}, V{0.09, 0.0}), 0.61, 1e-15);
  EXPECT_LT(gap(V{0.4, 0.9}, V{0.5}), 0.0);
}

TEST(CalibrateTau, MiddleOfBestRun) {
  // min(R,U) is 1 for tau in (0.40, 0.60]
  EXPECT_NEAR(calibrate_tau(ru_curve(V{0.6}, V{0.4}, 100)), 0.50, 1e-15);
  const auto perfect = ru_curve(V{1.0}, V{0.0}, 100);
  const double tau = calibrate_tau(perfect);
  EXPECT_EQ(robustness(V{1.0}, tau), 1.0);
  EXPECT_EQ(uniqueness(V{0.0}, tau), 1.0);
  EXPECT_THROW(calibrate_tau({}), InputError);
}

}  // namespace
}  // namespace ipguard
