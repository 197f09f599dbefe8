#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "ipguard/error.hpp"

namespace ipguard {

namespace detail {

inline void check_rates(std::span<const double> rates, const char* what) {
  if (rates.empty()) throw InputError(std::string(what) + " population is empty");
  for (double r : rates)
    if (!(r >= 0.0 && r <= 1.0)) throw InputError(std::string(what) + " rate outside [0,1]");
}

}  // namespace detail

/// Fraction of positive suspects verified at tau (rate >= tau).
inline double robustness(std::span<const double> positive_rates, double tau) {
  detail::check_rates(positive_rates, "positive");
  const auto hits = std::count_if(positive_rates.begin(), positive_rates.end(), [&](double r) { return r >= tau; });
  return static_cast<double>(hits) / static_cast<double>(positive_rates.size());
}

/// Fraction of negative suspects not verified at tau (rate < tau).
inline double uniqueness(std::span<const double> negative_rates, double tau) {
  detail::check_rates(negative_rates, "negative");
  const auto hits = std::count_if(negative_rates.begin(), negative_rates.end(), [&](double r) { return r < tau; });
  return static_cast<double>(hits) / static_cast<double>(negative_rates.size());
}

struct CurvePoint {
  double tau;
  double robustness;
  double uniqueness;

  bool operator==(const CurvePoint&) const = default;
};

/// Robustness and uniqueness at the right end of each of r equal intervals of [0,1].
inline std::vector<CurvePoint> ru_curve(std::span<const double> pos, std::span<const double> neg, int r = 100) {
  if (r < 1) throw InputError("curve resolution r must be at least 1");
  detail::check_rates(pos, "positive");
  detail::check_rates(neg, "negative");
  std::vector<CurvePoint> curve;
  curve.reserve(static_cast<std::size_t>(r));
  for (int t = 1; t <= r; ++t) {
    const double tau = static_cast<double>(t) / static_cast<double>(r);
    curve.push_back({tau, robustness(pos, tau), uniqueness(neg, tau)});
  }
  return curve;
}

inline double aruc_from_curve(const std::vector<CurvePoint>& curve) {
  double s = 0.0;
  for (const auto& p : curve) s += std::min(p.robustness, p.uniqueness);
  return s / static_cast<double>(curve.size());
}

/// Area under the intersected robustness-uniqueness curves, right-endpoint rule on r intervals.
inline double aruc(std::span<const double> pos, std::span<const double> neg, int r = 100) {
  return aruc_from_curve(ru_curve(pos, neg, r));
}

/// Mann-Whitney statistic: P(pos > neg) + 0.5 * P(pos == neg) over all pairs.
inline double auc(std::span<const double> pos, std::span<const double> neg) {
  detail::check_rates(pos, "positive");
  detail::check_rates(neg, "negative");
  double s = 0.0;
  for (double p : pos)
    for (double q : neg) s += p > q ? 1.0 : (p == q ? 0.5 : 0.0);
  return s / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

/// Smallest positive rate minus largest negative rate; negative when populations overlap.
inline double gap(std::span<const double> pos, std::span<const double> neg) {
  detail::check_rates(pos, "positive");
  detail::check_rates(neg, "negative");
  return *std::min_element(pos.begin(), pos.end()) - *std::max_element(neg.begin(), neg.end());
}

/// Threshold from the first run of grid points maximizing min(R, U); returns the run's
/// middle grid point.
inline double calibrate_tau(const std::vector<CurvePoint>& curve) {
  if (curve.empty()) throw InputError("empty curve");
  double best = -1.0;
  std::size_t start = 0, len = 0;
  for (std::size_t t = 0; t < curve.size();) {
    const double v = std::min(curve[t].robustness, curve[t].uniqueness);
    std::size_t e = t + 1;
    while (e < curve.size() && std::min(curve[e].robustness, curve[e].uniqueness) == v) ++e;
    if (v > best) {
      best = v;
      start = t;
      len = e - t;
    }
    t = e;
  }
  return curve[start + (len - 1) / 2].tau;
}

}  // namespace ipguard
