#pragma once

// Independent reference computations used only by tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "ipguard/data.hpp"
#include "ipguard/nn.hpp"
#include "ipguard/random.hpp"

namespace ipguard::testing {

/// Central finite-difference gradient of a scalar function.
inline std::vector<double> finite_difference(const std::function<double(std::span<const double>)>& f,
                                             std::span<const double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  std::vector<double> xp(x.begin(), x.end());
  for (std::size_t t = 0; t < x.size(); ++t) {
    const double orig = xp[t];
    xp[t] = orig + h;
    const double fp = f(xp);
    xp[t] = orig - h;
    const double fm = f(xp);
    xp[t] = orig;
    g[t] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Boundary objective written out term by term.
inline double brute_force_boundary_objective(const std::vector<double>& z, std::size_t i, std::size_t j, double k) {
  double first = z[i] - z[j] + k;
  if (first < 0.0) first = 0.0;
  double second = 0.0;
  bool any = false;
  double best = 0.0;
  for (std::size_t t = 0; t < z.size(); ++t) {
    if (t == i || t == j) continue;
    if (!any || z[t] > best) best = z[t];
    any = true;
  }
  if (any && best - z[i] > 0.0) second = best - z[i];
  return first + second;
}

/// ARUC for rates given in integer hundredths; every comparison is done on integers.
inline double brute_force_aruc_hundredths(const std::vector<int>& pos, const std::vector<int>& neg, int r) {
  double total = 0.0;
  for (int t = 1; t <= r; ++t) {
    // rate m/100 >= t/r  <=>  m * r >= t * 100
    int verified_pos = 0, rejected_neg = 0;
    for (int m : pos)
      if (m * r >= t * 100) ++verified_pos;
    for (int m : neg)
      if (m * r < t * 100) ++rejected_neg;
    const double R = static_cast<double>(verified_pos) / static_cast<double>(pos.size());
    const double U = static_cast<double>(rejected_neg) / static_cast<double>(neg.size());
    total += std::min(R, U);
  }
  return total / static_cast<double>(r);
}

/// Kolmogorov-Smirnov p-value for a sample against Uniform(0,1), asymptotic series.
inline double ks_uniform_pvalue(std::vector<double> sample) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    d = std::max(d, static_cast<double>(i + 1) / n - sample[i]);
    d = std::max(d, sample[i] - static_cast<double>(i) / n);
  }
  const double lambda = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) p += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(p, 0.0, 1.0);
}

/// Two Gaussian blobs in [0,1]^2 with centres 6 sigma apart.
inline Dataset separated_blobs(std::size_t n_per_class, std::uint64_t seed) {
  Rng rng(seed);
  Dataset data{2, 2, {}, {}};
  const double sigma = 0.05;
  const double centres[2][2] = {{0.35, 0.5}, {0.65, 0.5}};
  for (std::size_t cls = 0; cls < 2; ++cls)
    for (std::size_t i = 0; i < n_per_class; ++i) {
      const double x[2] = {std::clamp(centres[cls][0] + sigma * rng.normal(), 0.0, 1.0),
                           std::clamp(centres[cls][1] + sigma * rng.normal(), 0.0, 1.0)};
      data.add(x, cls);
    }
  return data;
}

/// Single identity layer whose logits equal its bias (weights zero).
inline Network constant_logits(const std::vector<double>& logits, std::size_t input_dim = 2) {
  DenseLayer l{input_dim, logits.size(), std::vector<double>(input_dim * logits.size(), 0.0), logits,
               Activation::identity};
  return Network({l}, "constant");
}

inline std::vector<double> random_point(Rng& rng, std::size_t d) {
  std::vector<double> x(d);
  for (double& v : x) v = rng.uniform();
  return x;
}

}  // namespace ipguard::testing
