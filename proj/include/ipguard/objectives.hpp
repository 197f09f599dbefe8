#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ipguard/error.hpp"
#include "ipguard/nn.hpp"

// Scalar functions of the logit vector. Each call returns the value and overwrites
// `dz` with the (sub)gradient; building blocks compose into the attack objectives.

namespace ipguard {

struct LogitSelect {
  std::size_t index;

  double operator()(std::span<const double> z, std::span<double> dz) const {
    std::fill(dz.begin(), dz.end(), 0.0);
    dz[index] = 1.0;
    return z[index];
  }
};

/// sum_t coeffs[t] * z[t] + offset.
struct LogitAffine {
  std::vector<double> coeffs;
  double offset = 0.0;

  double operator()(std::span<const double> z, std::span<double> dz) const {
    double v = offset;
    for (std::size_t t = 0; t < z.size(); ++t) {
      v += coeffs[t] * z[t];
      dz[t] = coeffs[t];
    }
    return v;
  }
};

/// max over logits whose index is not excluded; ties pick the first index.
struct LogitMaxExcept {
  std::vector<std::size_t> excluded;

  double operator()(std::span<const double> z, std::span<double> dz) const {
    std::fill(dz.begin(), dz.end(), 0.0);
    std::size_t best = z.size();
    for (std::size_t t = 0; t < z.size(); ++t) {
      if (std::find(excluded.begin(), excluded.end(), t) != excluded.end()) continue;
      if (best == z.size() || z[t] > z[best]) best = t;
    }
    if (best == z.size()) throw InputError("max over an empty logit set");
    dz[best] = 1.0;
    return z[best];
  }
};

template <LogitObjective F>
struct Relu {
  F inner;

  double operator()(std::span<const double> z, std::span<double> dz) const {
    const double v = inner(z, dz);
    if (v > 0.0) return v;
    std::fill(dz.begin(), dz.end(), 0.0);
    return 0.0;
  }
};

template <LogitObjective F, LogitObjective G>
struct WeightedSum {
  F first;
  G second;
  double first_weight = 1.0;
  double second_weight = 1.0;

  double operator()(std::span<const double> z, std::span<double> dz) const {
    std::vector<double> tmp(dz.size());
    const double a = first(z, dz);
    const double b = second(z, tmp);
    for (std::size_t t = 0; t < dz.size(); ++t) dz[t] = first_weight * dz[t] + second_weight * tmp[t];
    return first_weight * a + second_weight * b;
  }
};

/// Cross-entropy loss -log softmax(z)[label].
struct CrossEntropy {
  std::size_t label;

  double operator()(std::span<const double> z, std::span<double> dz) const {
    const auto p = softmax(z);
    for (std::size_t t = 0; t < z.size(); ++t) dz[t] = p[t] - (t == label ? 1.0 : 0.0);
    const double m = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - m);
    return m + std::log(sum) - z[label];
  }
};

inline void check_label_pair(std::size_t c, std::size_t i, std::size_t j) {
  if (i >= c || j >= c) throw InputError("label out of range for " + std::to_string(c) + " classes");
  if (i == j) throw InputError("source and target labels must differ");
}

/// Boundary objective ReLU(Z_i - Z_j + k) + ReLU(max_{t != i,j} Z_t - Z_i).
/// With two classes the second term has an empty max and is 0.
inline double ipguard_objective(std::span<const double> z, std::size_t i, std::size_t j, double k) {
  check_label_pair(z.size(), i, j);
  if (!(k >= 0.0)) throw InputError("margin k must be non-negative");
  const double first = std::max(0.0, z[i] - z[j] + k);
  double rest = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < z.size(); ++t)
    if (t != i && t != j) rest = std::max(rest, z[t]);
  const double second = z.size() > 2 ? std::max(0.0, rest - z[i]) : 0.0;
  return first + second;
}

struct IpguardObjective {
  std::size_t source;
  std::size_t target;
  double k;

  double operator()(std::span<const double> z, std::span<double> dz) const {
    const double value = ipguard_objective(z, source, target, k);
    std::fill(dz.begin(), dz.end(), 0.0);
    if (z[source] - z[target] + k > 0.0) {
      dz[source] += 1.0;
      dz[target] -= 1.0;
    }
    if (z.size() > 2) {
      std::size_t best = z.size();
      for (std::size_t t = 0; t < z.size(); ++t)
        if (t != source && t != target && (best == z.size() || z[t] > z[best])) best = t;
      if (z[best] - z[source] > 0.0) {
        dz[best] += 1.0;
        dz[source] -= 1.0;
      }
    }
    return value;
  }
};

/// Targeted margin max(max_{t != j} Z_t - Z_j, -k).
struct CwMargin {
  std::size_t target;
  double k;

  double operator()(std::span<const double> z, std::span<double> dz) const {
    std::fill(dz.begin(), dz.end(), 0.0);
    std::size_t best = z.size();
    for (std::size_t t = 0; t < z.size(); ++t)
      if (t != target && (best == z.size() || z[t] > z[best])) best = t;
    const double margin = z[best] - z[target];
    if (margin > -k) {
      dz[best] = 1.0;
      dz[target] = -1.0;
      return margin;
    }
    return -k;
  }
};

/// Z_j - max_{t != j} Z_t: non-negative exactly when j is a (possibly tied) top label.
inline double target_lead(std::span<const double> z, std::size_t j) {
  double rest = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < z.size(); ++t)
    if (t != j) rest = std::max(rest, z[t]);
  return z[j] - rest;
}

}  // namespace ipguard
