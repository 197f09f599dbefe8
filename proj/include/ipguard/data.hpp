#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ipguard/error.hpp"
#include "ipguard/random.hpp"

namespace ipguard {

/// Labeled points in the unit box [0,1]^d, stored row-major.
struct Dataset {
  std::size_t d = 0;
  std::size_t c = 0;
  std::vector<double> features;
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> point(std::size_t i) const { return {features.data() + i * d, d}; }

  void add(std::span<const double> x, std::size_t label) {
    features.insert(features.end(), x.begin(), x.end());
    labels.push_back(label);
  }

  void validate() const {
    if (labels.empty()) throw InputError("dataset is empty");
    if (d == 0) throw InputError("dataset dimension is zero");
    if (c < 2) throw InputError("dataset needs at least 2 classes");
    if (features.size() != labels.size() * d) throw InputError("dataset feature block has the wrong size");
    for (std::size_t i = 0; i < features.size(); ++i)
      if (!(features[i] >= 0.0 && features[i] <= 1.0))
        throw InputError("dataset point " + std::to_string(i / d) + " leaves the unit box");
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] >= c) throw InputError("dataset label at point " + std::to_string(i) + " is out of range");
  }

  bool operator==(const Dataset&) const = default;
};

enum class SyntheticKind { blobs, moons, spirals };

inline std::string to_string(SyntheticKind k) {
  switch (k) {
    case SyntheticKind::blobs:
      return "blobs";
    case SyntheticKind::moons:
      return "moons";
    default:
      return "spirals";
  }
}

inline SyntheticKind synthetic_kind_from_string(const std::string& s) {
  if (s == "blobs") return SyntheticKind::blobs;
  if (s == "moons") return SyntheticKind::moons;
  if (s == "spirals") return SyntheticKind::spirals;
  throw InputError("unknown synthetic dataset kind '" + s + "'");
}

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::blobs;
  std::size_t n_per_class = 100;
  std::size_t c = 2;
  double noise_sigma = 0.1;
  std::size_t d = 2;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_per_class == 0) throw InputError("n_per_class must be positive");
    if (c < 2) throw InputError("class count must be at least 2");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw InputError("noise_sigma must be non-negative");
    if (kind == SyntheticKind::blobs && d < 2) throw InputError("blobs need d >= 2");
    if (kind == SyntheticKind::moons && (c != 2 || d != 2)) throw InputError("moons need c == 2 and d == 2");
    if (kind == SyntheticKind::spirals && d != 2) throw InputError("spirals need d == 2");
  }
};

/// Per-column affine map applied to raw features: (x - min) / (max - min), 0 on zero range.
struct RescaleParams {
  std::vector<double> min;
  std::vector<double> max;

  bool empty() const { return min.empty(); }
};

inline RescaleParams minmax_rescale(std::vector<double>& features, std::size_t d) {
  RescaleParams p{std::vector<double>(d, INFINITY), std::vector<double>(d, -INFINITY)};
  const std::size_t n = features.size() / d;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) {
      p.min[k] = std::min(p.min[k], features[i * d + k]);
      p.max[k] = std::max(p.max[k], features[i * d + k]);
    }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) {
      const double range = p.max[k] - p.min[k];
      double& v = features[i * d + k];
      v = range > 0.0 ? std::clamp((v - p.min[k]) / range, 0.0, 1.0) : 0.0;
    }
  return p;
}

inline Dataset generate(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Dataset data;
  data.c = spec.c;
  data.d = spec.kind == SyntheticKind::blobs ? spec.d : 2;
  std::vector<double> raw;
  raw.reserve(spec.n_per_class * spec.c * data.d);
  switch (spec.kind) {
    case SyntheticKind::blobs: {
      std::vector<double> centers(spec.c * data.d);
      for (double& v : centers) v = rng.uniform();
      for (std::size_t cls = 0; cls < spec.c; ++cls)
        for (std::size_t i = 0; i < spec.n_per_class; ++i) {
          for (std::size_t k = 0; k < data.d; ++k)
            raw.push_back(centers[cls * data.d + k] + spec.noise_sigma * rng.normal());
          data.labels.push_back(cls);
        }
      break;
    }
    case SyntheticKind::moons: {
      for (std::size_t cls = 0; cls < 2; ++cls)
        for (std::size_t i = 0; i < spec.n_per_class; ++i) {
          const double t = spec.n_per_class > 1
                               ? std::numbers::pi * static_cast<double>(i) / static_cast<double>(spec.n_per_class - 1)
                               : 0.0;
          const double x = cls == 0 ? std::cos(t) : 1.0 - std::cos(t);
          const double y = cls == 0 ? std::sin(t) : 0.5 - std::sin(t);
          raw.push_back(x + spec.noise_sigma * rng.normal());
          raw.push_back(y + spec.noise_sigma * rng.normal());
          data.labels.push_back(cls);
        }
      break;
    }
    case SyntheticKind::spirals: {
      for (std::size_t cls = 0; cls < spec.c; ++cls)
        for (std::size_t i = 0; i < spec.n_per_class; ++i) {
          const double t = static_cast<double>(i + 1) / static_cast<double>(spec.n_per_class);
          const double angle = 3.0 * std::numbers::pi * t + 2.0 * std::numbers::pi * static_cast<double>(cls) /
                                                                static_cast<double>(spec.c);
          raw.push_back(t * std::cos(angle) + spec.noise_sigma * rng.normal());
          raw.push_back(t * std::sin(angle) + spec.noise_sigma * rng.normal());
          data.labels.push_back(cls);
        }
      break;
    }
  }
  minmax_rescale(raw, data.d);
  data.features = std::move(raw);
  data.validate();
  return data;
}

struct CsvOptions {
  bool header = false;
  bool rescale = true;
  std::optional<std::size_t> num_classes;
};

struct CsvResult {
  Dataset data;
  RescaleParams rescale;
};

inline CsvResult load_csv(const std::string& path, const CsvOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::vector<double> features;
  std::vector<std::size_t> labels;
  std::size_t d = 0;
  std::size_t row = 0;
  std::string line;
  bool skip = opts.header;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (skip) {
      skip = false;
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.emplace_back();
    if (cells.size() < 2) throw FormatError("row " + std::to_string(row) + ": need at least one feature and a label");
    if (d == 0) d = cells.size() - 1;
    if (cells.size() - 1 != d)
      throw FormatError("row " + std::to_string(row) + ": expected " + std::to_string(d + 1) + " columns, got " +
                        std::to_string(cells.size()));
    for (std::size_t k = 0; k < d; ++k) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cells[k], &used);
      } catch (...) {
        used = 0;
      }
      if (used == 0 || used != cells[k].size() || !std::isfinite(v))
        throw FormatError("row " + std::to_string(row) + ": non-numeric cell '" + cells[k] + "'");
      features.push_back(v);
    }
    const std::string& lab = cells.back();
    std::size_t used = 0;
    long long label = -1;
    try {
      label = std::stoll(lab, &used);
    } catch (...) {
      used = 0;
    }
    if (used == 0 || used != lab.size()) throw FormatError("row " + std::to_string(row) + ": non-integer label '" + lab + "'");
    if (label < 0) throw FormatError("row " + std::to_string(row) + ": negative label");
    if (opts.num_classes && static_cast<std::size_t>(label) >= *opts.num_classes)
      throw FormatError("row " + std::to_string(row) + ": label " + std::to_string(label) + " outside [0, " +
                        std::to_string(*opts.num_classes) + ")");
    labels.push_back(static_cast<std::size_t>(label));
  }
  if (labels.empty()) throw FormatError("'" + path + "' contains no data rows");
  CsvResult result;
  if (opts.rescale) result.rescale = minmax_rescale(features, d);
  result.data.d = d;
  result.data.c = opts.num_classes ? *opts.num_classes : *std::max_element(labels.begin(), labels.end()) + 1;
  result.data.c = std::max<std::size_t>(result.data.c, 2);
  result.data.features = std::move(features);
  result.data.labels = std::move(labels);
  try {
    result.data.validate();
  } catch (const InputError& e) {
    throw FormatError(std::string(e.what()) + " (use rescaling for data outside [0,1])");
  }
  return result;
}

inline void emit_csv(const Dataset& data, const std::string& path, bool header = false) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  out.precision(17);
  if (header) {
    for (std::size_t k = 0; k < data.d; ++k) out << 'x' << k << ',';
    out << "label\n";
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.point(i)) out << v << ',';
    out << data.labels[i] << '\n';
  }
}

/// Stratified split. The train side gets round(fraction * n) points in total, spread over
/// classes by largest remainder so every class is within one point of its exact share.
inline std::pair<Dataset, Dataset> split(const Dataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw InputError("split fraction must lie in (0, 1)");
  data.validate();
  std::vector<std::vector<std::size_t>> by_class(data.c);
  for (std::size_t i = 0; i < data.size(); ++i) by_class[data.labels[i]].push_back(i);

  const auto total = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(data.size())));
  std::vector<std::size_t> quota(data.c);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t cls = 0; cls < data.c; ++cls) {
    const double exact = fraction * static_cast<double>(by_class[cls].size());
    quota[cls] = static_cast<std::size_t>(std::floor(exact));
    assigned += quota[cls];
    remainders.emplace_back(exact - std::floor(exact), cls);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < total && r < remainders.size(); ++r) {
    const std::size_t cls = remainders[r].second;
    if (quota[cls] < by_class[cls].size()) {
      ++quota[cls];
      ++assigned;
    }
  }

  Rng rng(seed);
  std::vector<bool> to_train(data.size(), false);
  for (std::size_t cls = 0; cls < data.c; ++cls) {
    auto idx = by_class[cls];
    rng.shuffle(idx.begin(), idx.end());
    for (std::size_t m = 0; m < quota[cls]; ++m) to_train[idx[m]] = true;
  }
  Dataset train{data.d, data.c, {}, {}};
  Dataset test{data.d, data.c, {}, {}};
  for (std::size_t i = 0; i < data.size(); ++i) (to_train[i] ? train : test).add(data.point(i), data.labels[i]);
  return {std::move(train), std::move(test)};
}

inline nlohmann::json to_json(const SyntheticSpec& s) {
  return {{"kind", to_string(s.kind)}, {"n_per_class", s.n_per_class}, {"c", s.c},
          {"noise_sigma", s.noise_sigma}, {"d", s.d},                  {"seed", s.seed}};
}

inline SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  s.kind = synthetic_kind_from_string(j.value("kind", std::string("blobs")));
  s.n_per_class = j.value("n_per_class", s.n_per_class);
  s.c = j.value("c", s.c);
  s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
  s.d = j.value("d", s.d);
  s.seed = j.value("seed", s.seed);
  return s;
}

/// Manifest written beside generated or ingested data.
inline nlohmann::json dataset_manifest(const Dataset& data, const std::optional<SyntheticSpec>& spec,
                                       const RescaleParams& rescale) {
  nlohmann::json m{{"version", 1}, {"n", data.size()}, {"d", data.d}, {"c", data.c}};
  if (spec) m["spec"] = to_json(*spec);
  if (!rescale.empty()) m["rescale"] = {{"min", rescale.min}, {"max", rescale.max}};
  return m;
}

}  // namespace ipguard
