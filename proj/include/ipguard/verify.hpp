#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "ipguard/error.hpp"
#include "ipguard/fingerprint.hpp"
#include "ipguard/oracle.hpp"
#include "ipguard/parallel.hpp"

namespace ipguard {

struct MatchResult {
  std::size_t matched = 0;
  std::size_t total = 0;
  std::vector<bool> mask;

  double rate() const { return static_cast<double>(matched) / static_cast<double>(total); }
};

/// Queries the oracle on every fingerprint point and compares against the stored labels.
inline MatchResult match(const Fingerprint& fp, const ClassifierOracle& oracle, unsigned threads = 1) {
  if (fp.size() == 0) throw InputError("fingerprint has no points");
  if (oracle.input_dim() != 0 && oracle.input_dim() != fp.d)
    throw InputError("oracle expects dimension " + std::to_string(oracle.input_dim()) + ", fingerprint has " +
                     std::to_string(fp.d));
  std::vector<char> hit(fp.size(), 0);
  const unsigned workers = oracle.concurrent_queries() ? threads : 1;
  parallel_for(fp.size(), workers, [&](std::size_t p) {
    std::size_t label = 0;
    try {
      label = oracle.query(fp.point(p));
    } catch (const QueryError&) {
      throw;
    } catch (const std::exception& e) {
      throw QueryError(p, e.what());
    }
    hit[p] = label == fp.labels[p] ? 1 : 0;
  });
  MatchResult r;
  r.total = fp.size();
  r.mask.resize(fp.size());
  for (std::size_t p = 0; p < fp.size(); ++p) {
    r.mask[p] = hit[p] != 0;
    r.matched += hit[p];
  }
  return r;
}

inline double matching_rate(const Fingerprint& fp, const ClassifierOracle& oracle, unsigned threads = 1) {
  return match(fp, oracle, threads).rate();
}

struct Verdict {
  double matching_rate = 0.0;
  std::size_t m = 0;
  std::size_t n = 0;
  double tau = 0.0;
  int decision = 0;
  std::vector<bool> mask;
};

/// Decision is 1 exactly when the matching rate reaches tau.
inline Verdict decide(const MatchResult& r, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw InputError("threshold tau must lie in [0, 1]");
  return {r.rate(), r.matched, r.total, tau, r.rate() >= tau ? 1 : 0, r.mask};
}

inline Verdict verify(const Fingerprint& fp, const ClassifierOracle& oracle, double tau, unsigned threads = 1) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw InputError("threshold tau must lie in [0, 1]");
  return decide(match(fp, oracle, threads), tau);
}

inline nlohmann::json to_json(const Verdict& v) {
  return {{"matching_rate", v.matching_rate}, {"m", v.m},           {"n", v.n},
          {"tau", v.tau},                     {"decision", v.decision}, {"mask", v.mask}};
}

}  // namespace ipguard
