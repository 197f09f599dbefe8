#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "ipguard/data.hpp"
#include "ipguard/error.hpp"
#include "ipguard/model_io.hpp"
#include "ipguard/nn.hpp"
#include "ipguard/objectives.hpp"
#include "ipguard/parallel.hpp"
#include "ipguard/random.hpp"
#include "ipguard/train.hpp"

namespace ipguard {

inline constexpr int kFingerprintVersion = 1;

enum class Method { ipguard, random, fgsm, igsm, cw };
enum class InitStrategy { training, random };       // T / R
enum class LabelStrategy { random, least_likely };  // R / L

inline std::string to_string(Method m) {
  switch (m) {
    case Method::ipguard:
      return "ipguard";
    case Method::random:
      return "random";
    case Method::fgsm:
      return "fgsm";
    case Method::igsm:
      return "igsm";
    default:
      return "cw";
  }
}

inline Method method_from_string(const std::string& s) {
  for (Method m : {Method::ipguard, Method::random, Method::fgsm, Method::igsm, Method::cw})
    if (to_string(m) == s) return m;
  throw InputError("unknown method '" + s + "' (expected ipguard, random, fgsm, igsm or cw)");
}

inline char to_char(InitStrategy s) { return s == InitStrategy::training ? 'T' : 'R'; }
inline char to_char(LabelStrategy s) { return s == LabelStrategy::random ? 'R' : 'L'; }

inline InitStrategy init_strategy_from_string(const std::string& s) {
  if (s == "T") return InitStrategy::training;
  if (s == "R") return InitStrategy::random;
  throw InputError("initialization strategy must be T or R, got '" + s + "'");
}

inline LabelStrategy label_strategy_from_string(const std::string& s) {
  if (s == "R") return LabelStrategy::random;
  if (s == "L") return LabelStrategy::least_likely;
  throw InputError("target-label strategy must be R or L, got '" + s + "'");
}

struct CwConfig {
  std::size_t binary_search_steps = 6;
  double c_init = 1.0;
  std::size_t inner_iters = 500;
};

struct ExtractConfig {
  Method method = Method::ipguard;
  std::size_t n = 100;
  double k = 0.0;
  double epsilon = 0.1;
  double alpha = 1.0 / 255.0;
  double lr = 0.01;
  std::size_t max_iters = 1000;
  InitStrategy init = InitStrategy::training;
  LabelStrategy label = LabelStrategy::least_likely;
  std::uint64_t seed = 0;
  CwConfig cw;
  unsigned threads = 1;

  /// e.g. "ipguard-TL"; the random baseline has no suffix.
  std::string tag() const {
    if (method == Method::random) return "random";
    return to_string(method) + "-" + to_char(init) + to_char(label);
  }

  void validate() const {
    if (n == 0) throw InputError("fingerprint size n must be at least 1");
    if (!(k >= 0.0) || !std::isfinite(k)) throw InputError("k must be a finite non-negative number");
    if (!(lr > 0.0)) throw InputError("learning rate must be positive");
    if (method == Method::fgsm && !(epsilon > 0.0)) throw InputError("FGSM needs epsilon > 0");
    if (method == Method::igsm && !(alpha > 0.0 && alpha <= epsilon))
      throw InputError("IGSM needs 0 < alpha <= epsilon");
    if (method == Method::cw && (cw.binary_search_steps == 0 || cw.inner_iters == 0 || !(cw.c_init > 0.0)))
      throw InputError("CW needs positive binary_search_steps, inner_iters and c_init");
  }
};

/// Boundary-probing data points and the labels the target assigned to them.
struct Fingerprint {
  Method method = Method::ipguard;
  ExtractConfig params;
  std::string target_digest;
  std::size_t d = 0;
  std::vector<double> points;
  std::vector<std::size_t> labels;
  std::vector<bool> converged;
  std::vector<std::size_t> iters;
  // Initial point and requested target label per point; -1 / empty when not applicable.
  std::vector<double> origins;
  std::vector<long long> target_labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> point(std::size_t i) const { return {points.data() + i * d, d}; }
  std::span<const double> origin(std::size_t i) const { return {origins.data() + i * d, d}; }

  bool operator==(const Fingerprint& o) const {
    return method == o.method && target_digest == o.target_digest && d == o.d && points == o.points &&
           labels == o.labels && converged == o.converged && iters == o.iters && origins == o.origins &&
           target_labels == o.target_labels && params.seed == o.params.seed;
  }
};

inline void clamp_unit(std::span<double> x) {
  for (double& v : x) v = std::clamp(v, 0.0, 1.0);
}

/// Top-1 minus top-2 logit is at most `tol`.
inline bool is_near_boundary(const Network& net, std::span<const double> x, double tol) {
  auto z = forward_logits(net, x);
  std::partial_sort(z.begin(), z.begin() + 2, z.end(), std::greater<>());
  return z[0] - z[1] <= tol;
}

struct InitialPoint {
  std::vector<double> x;
  std::size_t label;
};

inline InitialPoint select_initial_point(const Network& target, const Dataset* data, InitStrategy strategy, Rng& rng) {
  InitialPoint p;
  if (strategy == InitStrategy::training) {
    if (!data || data->size() == 0) throw InputError("training-example initialization needs a non-empty dataset");
    const auto src = data->point(rng.below(data->size()));
    p.x.assign(src.begin(), src.end());
  } else {
    p.x.resize(target.input_dim());
    for (double& v : p.x) v = rng.uniform();
  }
  p.label = predict_label(target, p.x);
  return p;
}

/// Least-likely picks the smallest logit (first on ties), falling back to the second
/// smallest when that collides with `source`.
inline std::size_t select_target_label(std::span<const double> logits, std::size_t source, LabelStrategy strategy,
                                       Rng& rng) {
  const std::size_t c = logits.size();
  if (c < 2) throw InputError("need at least two classes to pick a target label");
  if (strategy == LabelStrategy::random) {
    const auto u = static_cast<std::size_t>(rng.below(c - 1));
    return u < source ? u : u + 1;
  }
  std::vector<std::size_t> order(c);
  for (std::size_t t = 0; t < c; ++t) order[t] = t;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return logits[a] < logits[b]; });
  return order[0] != source ? order[0] : order[1];
}

inline std::size_t select_target_label(const Network& target, std::span<const double> x0, std::size_t source,
                                       LabelStrategy strategy, Rng& rng) {
  const auto z = forward_logits(target, x0);
  return select_target_label(z, source, strategy, rng);
}

/// x - step * sign(grad), then clipped into the unit box.
inline std::vector<double> signed_step(std::span<const double> x, std::span<const double> grad, double step) {
  std::vector<double> out(x.begin(), x.end());
  for (std::size_t t = 0; t < out.size(); ++t) {
    const double s = grad[t] > 0.0 ? 1.0 : (grad[t] < 0.0 ? -1.0 : 0.0);
    out[t] = std::clamp(out[t] - step * s, 0.0, 1.0);
  }
  return out;
}

struct PointResult {
  std::vector<double> x;
  bool converged = false;
  std::size_t iters = 0;
};

namespace detail {

// Bisect between `outside` (objective > 0) and `inside` (objective == 0) and return the
// innermost point still satisfying the zero condition.
inline std::vector<double> polish_to_boundary(const Network& target, std::vector<double> outside,
                                              std::vector<double> inside, std::size_t i, std::size_t j) {
  std::vector<double> mid(inside.size());
  for (int step = 0; step < 64; ++step) {
    for (std::size_t t = 0; t < mid.size(); ++t) mid[t] = 0.5 * (outside[t] + inside[t]);
    if (mid == outside || mid == inside) break;
    const auto z = forward_logits(target, mid);
    (ipguard_objective(z, i, j, 0.0) == 0.0 ? inside : outside) = mid;
  }
  return inside;
}

inline constexpr double kPolishTolerance = 1e-6;

// Tries the recorded outside iterates from the most recent backwards and keeps the first
// polish that lands on the face Z_j == Z_i. Bisection can instead stop on a face where
// Z_i ties a third class; that result is kept only if no candidate reaches the i/j face.
inline std::vector<double> polish_from_history(const Network& target, const std::vector<std::vector<double>>& history,
                                               const std::vector<double>& inside, std::size_t i, std::size_t j) {
  std::optional<std::vector<double>> fallback;
  for (auto it = history.rbegin(); it != history.rend(); ++it) {
    auto x = polish_to_boundary(target, *it, inside, i, j);
    const auto z = forward_logits(target, x);
    if (z[j] - z[i] <= kPolishTolerance) return x;
    if (!fallback) fallback = std::move(x);
  }
  return fallback ? *fallback : inside;
}

}  // namespace detail

/// Adam descent on the boundary objective with projection onto the unit box after every
/// step. Stops when the objective is exactly 0 or after `max_iters` steps. With k = 0 the
/// converged point is then bisected onto the i/j boundary.
inline PointResult ipguard_point(const Network& target, std::span<const double> x0, std::size_t i, std::size_t j,
                                 const ExtractConfig& cfg) {
  PointResult r;
  r.x.assign(x0.begin(), x0.end());
  AdamState state(r.x.size());
  std::vector<double> z;
  // iterates where only the first term is active: Z_j < Z_i and Z_i on top
  std::vector<std::vector<double>> first_term_only;
  const IpguardObjective objective{i, j, cfg.k};
  auto tracked = [&](std::span<const double> logits, std::span<double> dz) {
    z.assign(logits.begin(), logits.end());
    return objective(logits, dz);
  };
  for (std::size_t it = 0;; ++it) {
    const auto vg = value_and_input_gradient(target, r.x, tracked);
    if (vg.value == 0.0) {
      r.converged = true;
      r.iters = it;
      break;
    }
    if (it == cfg.max_iters) {
      r.iters = it;
      break;
    }
    if (cfg.k == 0.0 && z[j] < z[i] && argmax(z) == i) first_term_only.push_back(r.x);
    adam_step(r.x, vg.gradient, state, cfg.lr);
    clamp_unit(r.x);
  }
  if (r.converged && cfg.k == 0.0) r.x = detail::polish_from_history(target, first_term_only, r.x, i, j);
  return r;
}

inline PointResult fgsm_point(const Network& target, std::span<const double> x0, std::size_t j,
                              const ExtractConfig& cfg) {
  const auto grad = input_gradient(target, x0, CrossEntropy{j});
  PointResult r{signed_step(x0, grad, cfg.epsilon), false, 1};
  r.converged = predict_label(target, r.x) == j;
  return r;
}

/// Iterated signed steps of size alpha; the cumulative perturbation from x0 is capped at
/// epsilon per coordinate. Stops at the first iterate the target labels j.
inline PointResult igsm_point(const Network& target, std::span<const double> x0, std::size_t j,
                              const ExtractConfig& cfg) {
  PointResult r;
  r.x.assign(x0.begin(), x0.end());
  for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
    const auto grad = input_gradient(target, r.x, CrossEntropy{j});
    auto next = signed_step(r.x, grad, cfg.alpha);
    for (std::size_t t = 0; t < next.size(); ++t)
      next[t] = std::clamp(std::clamp(next[t], x0[t] - cfg.epsilon, x0[t] + cfg.epsilon), 0.0, 1.0);
    r.x = std::move(next);
    r.iters = it;
    if (predict_label(target, r.x) == j) {
      r.converged = true;
      break;
    }
  }
  return r;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) s += (a[t] - b[t]) * (a[t] - b[t]);
  return s;
}

/// Targeted L2 attack: x = (tanh(w) + 1) / 2, minimize |x - x0|^2 + c * max(max_{t!=j} Z_t - Z_j, -k)
/// with Adam, bisecting c across outer steps. Keeps the successful x with the least noise.
inline PointResult cw_point(const Network& target, std::span<const double> x0, std::size_t j,
                            const ExtractConfig& cfg) {
  const std::size_t d = x0.size();
  std::vector<double> w0(d);
  for (std::size_t t = 0; t < d; ++t) w0[t] = std::atanh((2.0 * x0[t] - 1.0) * 0.999999);

  PointResult r;
  r.x.assign(x0.begin(), x0.end());
  double best_l2 = std::numeric_limits<double>::infinity();
  double best_effort_lead = -std::numeric_limits<double>::infinity();
  std::vector<double> best_effort(x0.begin(), x0.end());
  double lower = 0.0;
  double upper = std::numeric_limits<double>::infinity();
  double c = cfg.cw.c_init;
  const CwMargin margin{j, cfg.k};
  std::vector<double> x(d), z;

  for (std::size_t step = 0; step < cfg.cw.binary_search_steps; ++step) {
    std::vector<double> w = w0;
    AdamState state(d);
    bool success = false;
    for (std::size_t it = 0; it <= cfg.cw.inner_iters; ++it) {
      for (std::size_t t = 0; t < d; ++t) x[t] = 0.5 * (std::tanh(w[t]) + 1.0);
      auto tracked = [&](std::span<const double> logits, std::span<double> dz) {
        z.assign(logits.begin(), logits.end());
        return margin(logits, dz);
      };
      auto vg = value_and_input_gradient(target, x, tracked);
      ++r.iters;
      const double lead = target_lead(z, j);
      const double l2 = squared_distance(x, x0);
      if (lead >= cfg.k) {
        success = true;
        if (l2 < best_l2) {
          best_l2 = l2;
          r.x = x;
          r.converged = true;
        }
      } else if (lead > best_effort_lead) {
        best_effort_lead = lead;
        best_effort = x;
      }
      if (it == cfg.cw.inner_iters) break;
      std::vector<double> gw(d);
      for (std::size_t t = 0; t < d; ++t) {
        const double th = std::tanh(w[t]);
        gw[t] = (2.0 * (x[t] - x0[t]) + c * vg.gradient[t]) * 0.5 * (1.0 - th * th);
      }
      adam_step(w, gw, state, cfg.lr);
    }
    if (success) {
      upper = std::min(upper, c);
      c = 0.5 * (lower + upper);
    } else {
      lower = std::max(lower, c);
      c = std::isinf(upper) ? c * 2.0 : 0.5 * (lower + upper);
    }
  }
  if (!r.converged) r.x = best_effort;
  clamp_unit(r.x);
  return r;
}

/// Extracts a fingerprint with the configured method. Point i uses its own RNG stream
/// derived from (seed, i), so the result is independent of the thread count.
inline Fingerprint extract(const Network& target, const Dataset* data, const ExtractConfig& cfg) {
  cfg.validate();
  if (data && data->d != target.input_dim()) throw InputError("dataset dimension does not match the target");
  const std::size_t d = target.input_dim();
  Fingerprint fp;
  fp.method = cfg.method;
  fp.params = cfg;
  fp.target_digest = model_digest(target);
  fp.d = d;
  fp.points.assign(cfg.n * d, 0.0);
  fp.labels.assign(cfg.n, 0);
  fp.converged.assign(cfg.n, false);
  fp.iters.assign(cfg.n, 0);
  fp.origins.assign(cfg.n * d, 0.0);
  fp.target_labels.assign(cfg.n, -1);
  std::vector<char> converged(cfg.n, 0);

  parallel_for(cfg.n, cfg.threads, [&](std::size_t p) {
    Rng rng(derive_seed(cfg.seed, {p}));
    PointResult r;
    std::vector<double> x0;
    long long j_out = -1;
    if (cfg.method == Method::random) {
      x0.resize(d);
      for (double& v : x0) v = rng.uniform();
      r = {x0, true, 0};
    } else {
      auto init = select_initial_point(target, data, cfg.init, rng);
      x0 = std::move(init.x);
      const std::size_t j = select_target_label(target, x0, init.label, cfg.label, rng);
      j_out = static_cast<long long>(j);
      switch (cfg.method) {
        case Method::ipguard:
          r = ipguard_point(target, x0, init.label, j, cfg);
          break;
        case Method::fgsm:
          r = fgsm_point(target, x0, j, cfg);
          break;
        case Method::igsm:
          r = igsm_point(target, x0, j, cfg);
          break;
        default:
          r = cw_point(target, x0, j, cfg);
          break;
      }
    }
    std::copy(r.x.begin(), r.x.end(), fp.points.begin() + static_cast<std::ptrdiff_t>(p * d));
    std::copy(x0.begin(), x0.end(), fp.origins.begin() + static_cast<std::ptrdiff_t>(p * d));
    fp.labels[p] = predict_label(target, r.x);
    converged[p] = r.converged ? 1 : 0;
    fp.iters[p] = r.iters;
    fp.target_labels[p] = j_out;
  });
  for (std::size_t p = 0; p < cfg.n; ++p) fp.converged[p] = converged[p] != 0;
  return fp;
}

inline Fingerprint extract_ipguard(const Network& target, const Dataset& data, ExtractConfig cfg) {
  cfg.method = Method::ipguard;
  return extract(target, &data, cfg);
}

inline Fingerprint extract_random(const Network& target, ExtractConfig cfg) {
  cfg.method = Method::random;
  return extract(target, nullptr, cfg);
}

inline Fingerprint extract_fgsm(const Network& target, const Dataset& data, ExtractConfig cfg) {
  cfg.method = Method::fgsm;
  return extract(target, &data, cfg);
}

inline Fingerprint extract_igsm(const Network& target, const Dataset& data, ExtractConfig cfg) {
  cfg.method = Method::igsm;
  return extract(target, &data, cfg);
}

inline Fingerprint extract_cw(const Network& target, const Dataset& data, ExtractConfig cfg) {
  cfg.method = Method::cw;
  return extract(target, &data, cfg);
}

/// Mean L2 distance between each point and its initialization.
inline double mean_l2_noise(const Fingerprint& fp) {
  double s = 0.0;
  for (std::size_t p = 0; p < fp.size(); ++p) s += std::sqrt(squared_distance(fp.point(p), fp.origin(p)));
  return s / static_cast<double>(fp.size());
}

inline nlohmann::json to_json(const ExtractConfig& c) {
  return {{"k", c.k},
          {"epsilon", c.epsilon},
          {"alpha", c.alpha},
          {"lr", c.lr},
          {"max_iters", c.max_iters},
          {"init", std::string(1, to_char(c.init))},
          {"label", std::string(1, to_char(c.label))},
          {"cw",
           {{"binary_search_steps", c.cw.binary_search_steps},
            {"c_init", c.cw.c_init},
            {"inner_iters", c.cw.inner_iters}}}};
}

inline ExtractConfig extract_config_from_json(const nlohmann::json& j, ExtractConfig c = {}) {
  c.k = j.value("k", c.k);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.alpha = j.value("alpha", c.alpha);
  c.lr = j.value("lr", c.lr);
  c.max_iters = j.value("max_iters", c.max_iters);
  if (j.contains("init")) c.init = init_strategy_from_string(j.at("init").get<std::string>());
  if (j.contains("label")) c.label = label_strategy_from_string(j.at("label").get<std::string>());
  if (j.contains("cw")) {
    const auto& cw = j.at("cw");
    c.cw.binary_search_steps = cw.value("binary_search_steps", c.cw.binary_search_steps);
    c.cw.c_init = cw.value("c_init", c.cw.c_init);
    c.cw.inner_iters = cw.value("inner_iters", c.cw.inner_iters);
  }
  return c;
}

inline nlohmann::json to_json(const Fingerprint& fp) {
  nlohmann::json points = nlohmann::json::array();
  nlohmann::json origins = nlohmann::json::array();
  for (std::size_t p = 0; p < fp.size(); ++p) {
    points.push_back(std::vector<double>(fp.point(p).begin(), fp.point(p).end()));
    origins.push_back(std::vector<double>(fp.origin(p).begin(), fp.origin(p).end()));
  }
  return {{"version", kFingerprintVersion},
          {"method", to_string(fp.method)},
          {"params", to_json(fp.params)},
          {"seed", fp.params.seed},
          {"target_digest", fp.target_digest},
          {"n", fp.size()},
          {"d", fp.d},
          {"points", std::move(points)},
          {"labels", fp.labels},
          {"converged", fp.converged},
          {"iters", fp.iters},
          {"origins", std::move(origins)},
          {"target_labels", fp.target_labels}};
}

inline Fingerprint fingerprint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != kFingerprintVersion)
      throw FormatError("unsupported fingerprint version " + j.at("version").dump());
    Fingerprint fp;
    fp.method = method_from_string(j.at("method").get<std::string>());
    fp.params = extract_config_from_json(j.at("params"));
    fp.params.method = fp.method;
    fp.params.seed = j.at("seed").get<std::uint64_t>();
    fp.target_digest = j.at("target_digest").get<std::string>();
    const auto n = j.at("n").get<std::size_t>();
    fp.params.n = n;
    fp.d = j.at("d").get<std::size_t>();
    fp.labels = j.at("labels").get<std::vector<std::size_t>>();
    fp.converged = j.at("converged").get<std::vector<bool>>();
    fp.iters = j.at("iters").get<std::vector<std::size_t>>();
    const auto& points = j.at("points");
    if (points.size() != n || fp.labels.size() != n || fp.converged.size() != n || fp.iters.size() != n)
      throw FormatError("fingerprint arrays disagree with n = " + std::to_string(n));
    auto read_rows = [&](const nlohmann::json& rows, std::vector<double>& out, const char* what) {
      for (const auto& row : rows) {
        const auto v = row.get<std::vector<double>>();
        if (v.size() != fp.d) throw FormatError(std::string(what) + " row has dimension != d");
        for (double x : v)
          if (!(x >= 0.0 && x <= 1.0)) throw FormatError(std::string(what) + " coordinate outside [0,1]");
        out.insert(out.end(), v.begin(), v.end());
      }
    };
    read_rows(points, fp.points, "point");
    if (j.contains("origins")) {
      if (j.at("origins").size() != n) throw FormatError("origins length disagrees with n");
      read_rows(j.at("origins"), fp.origins, "origin");
    }
    if (j.contains("target_labels")) {
      fp.target_labels = j.at("target_labels").get<std::vector<long long>>();
      if (fp.target_labels.size() != n) throw FormatError("target_labels length disagrees with n");
    }
    return fp;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed fingerprint: ") + e.what());
  } catch (const InputError& e) {
    throw FormatError(std::string("malformed fingerprint: ") + e.what());
  }
}

inline void save_fingerprint(const Fingerprint& fp, const std::string& path) {
  write_file(path, to_json(fp).dump(1) + "\n");
}

inline Fingerprint load_fingerprint(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("'" + path + "' is not valid JSON: " + e.what());
  }
  return fingerprint_from_json(j);
}

}  // namespace ipguard
