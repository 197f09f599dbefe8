#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ipguard/data.hpp"
#include "ipguard/error.hpp"
#include "ipguard/forest.hpp"
#include "ipguard/model_io.hpp"
#include "ipguard/nn.hpp"
#include "ipguard/oracle.hpp"
#include "ipguard/parallel.hpp"
#include "ipguard/train.hpp"

namespace ipguard {

enum class SuspectTag { positive, negative };

inline std::string to_string(SuspectTag t) { return t == SuspectTag::positive ? "positive" : "negative"; }

/// Post-processed versions of the target are positives; everything else is negative.
inline bool is_positive_kind(const std::string& kind) {
  return kind == "FTLL" || kind == "FTAL" || kind == "RTLL" || kind == "RTAL" || kind == "WP" || kind == "FP";
}

inline bool is_known_kind(const std::string& kind) {
  return is_positive_kind(kind) || kind == "same-arch" || kind == "diff-arch" || kind == "forest";
}

struct SuspectEntry {
  std::string kind;
  SuspectTag tag = SuspectTag::negative;
  double fraction = 0.0;  // pruning fraction for WP / FP
  std::uint64_t seed = 0;
  double test_accuracy = 0.0;
  Model model;
  std::shared_ptr<const ClassifierOracle> oracle;

  std::string label() const {
    if (kind != "WP" && kind != "FP") return kind;
    std::ostringstream ss;
    ss << kind << '(' << fraction << ')';
    return ss.str();
  }
};

struct SuspectSet {
  std::vector<SuspectEntry> entries;

  std::size_t count(SuspectTag tag) const {
    return static_cast<std::size_t>(
        std::count_if(entries.begin(), entries.end(), [&](const auto& e) { return e.tag == tag; }));
  }
};

inline SuspectEntry make_entry(std::string kind, double fraction, std::uint64_t seed, Model model,
                               const Dataset& test) {
  SuspectEntry e;
  e.kind = std::move(kind);
  e.tag = is_positive_kind(e.kind) ? SuspectTag::positive : SuspectTag::negative;
  e.fraction = fraction;
  e.seed = seed;
  e.model = std::move(model);
  e.oracle = make_oracle(e.model);
  const auto& oracle = *e.oracle;
  e.test_accuracy = accuracy(test, [&](std::span<const double> x) { return oracle.query(x); });
  return e;
}

namespace detail {

inline std::vector<bool> only_last_layer(const Network& net) {
  std::vector<bool> t(net.layers().size(), false);
  t.back() = true;
  return t;
}

inline Network reinit_last_layer(const Network& net, std::uint64_t seed) {
  auto layers = net.layers();
  Rng rng(seed);
  glorot_init(layers.back(), rng);
  return Network(std::move(layers), net.arch_id(), net.lineage() + ";reinit:" + std::to_string(seed));
}

}  // namespace detail

/// Fine-tune only the last layer.
inline Network ftll(const Network& net, const Dataset& data, const TrainConfig& cfg) {
  return train(net, data, cfg, {detail::only_last_layer(net), {}});
}

/// Fine-tune every layer starting from the target's weights.
inline Network ftal(const Network& net, const Dataset& data, const TrainConfig& cfg) { return train(net, data, cfg); }

/// Re-initialize the last layer, then train only it.
inline Network rtll(const Network& net, const Dataset& data, const TrainConfig& cfg, std::uint64_t seed) {
  const auto fresh = detail::reinit_last_layer(net, seed);
  return train(fresh, data, cfg, {detail::only_last_layer(net), {}});
}

/// Re-initialize the last layer, then train all layers.
inline Network rtal(const Network& net, const Dataset& data, const TrainConfig& cfg, std::uint64_t seed) {
  return train(detail::reinit_last_layer(net, seed), data, cfg);
}

/// Masks zeroing the floor(p * W) non-bias weights of smallest magnitude, ranked globally
/// across layers (ties keep the earlier position).
inline std::vector<std::vector<double>> weight_prune_masks(const Network& net, double p) {
  if (!(p > 0.0 && p < 1.0)) throw InputError("weight pruning fraction must lie in (0, 1)");
  struct Ref {
    double mag;
    std::size_t layer, index;
  };
  std::vector<Ref> all;
  for (std::size_t li = 0; li < net.layers().size(); ++li)
    for (std::size_t k = 0; k < net.layers()[li].weights.size(); ++k)
      all.push_back({std::abs(net.layers()[li].weights[k]), li, k});
  const auto count = static_cast<std::size_t>(std::floor(p * static_cast<double>(all.size())));
  std::stable_sort(all.begin(), all.end(), [](const Ref& a, const Ref& b) { return a.mag < b.mag; });
  std::vector<std::vector<double>> masks;
  for (const auto& l : net.layers()) masks.emplace_back(l.weights.size(), 1.0);
  for (std::size_t m = 0; m < count; ++m) masks[all[m].layer][all[m].index] = 0.0;
  return masks;
}

inline std::size_t total_weight_count(const Network& net) {
  std::size_t n = 0;
  for (const auto& l : net.layers()) n += l.weights.size();
  return n;
}

/// Prune then retrain with the pruned weights held at zero.
inline Network weight_prune(const Network& net, double p, const Dataset& data, const TrainConfig& cfg) {
  auto masks = weight_prune_masks(net, p);
  auto layers = net.layers();
  apply_weight_masks(layers, masks);
  std::ostringstream tag;
  tag << ";wp:" << p;
  const Network pruned(std::move(layers), net.arch_id(), net.lineage() + tag.str());
  return train(pruned, data, cfg, {{}, std::move(masks)});
}

/// Hidden units to remove per hidden layer: the floor(c * width) units with the smallest
/// L1 norm of incoming weights. The output layer is never pruned.
inline std::vector<std::vector<std::size_t>> filter_prune_selection(const Network& net, double c) {
  if (!(c > 0.0 && c < 1.0)) throw InputError("filter pruning fraction must lie in (0, 1)");
  std::vector<std::vector<std::size_t>> removed;
  for (std::size_t li = 0; li + 1 < net.layers().size(); ++li) {
    const auto& l = net.layers()[li];
    const auto count = static_cast<std::size_t>(std::floor(c * static_cast<double>(l.out)));
    std::vector<std::pair<double, std::size_t>> norms;
    for (std::size_t r = 0; r < l.out; ++r) {
      double s = 0.0;
      for (std::size_t k = 0; k < l.in; ++k) s += std::abs(l.w(r, k));
      norms.emplace_back(s, r);
    }
    std::stable_sort(norms.begin(), norms.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::size_t> drop;
    for (std::size_t m = 0; m < count; ++m) drop.push_back(norms[m].second);
    std::sort(drop.begin(), drop.end());
    removed.push_back(std::move(drop));
  }
  return removed;
}

/// Structurally removes hidden units: drops their rows in layer l and columns in layer l+1.
inline Network remove_hidden_units(const Network& net, const std::vector<std::vector<std::size_t>>& removed) {
  auto layers = net.layers();
  for (std::size_t li = 0; li < removed.size(); ++li) {
    const auto& drop = removed[li];
    if (drop.empty()) continue;
    auto keep_unit = [&](std::size_t u) { return !std::binary_search(drop.begin(), drop.end(), u); };
    DenseLayer& cur = layers[li];
    DenseLayer& next = layers[li + 1];
    DenseLayer new_cur{cur.in, cur.out - drop.size(), {}, {}, cur.activation};
    for (std::size_t r = 0; r < cur.out; ++r) {
      if (!keep_unit(r)) continue;
      for (std::size_t k = 0; k < cur.in; ++k) new_cur.weights.push_back(cur.w(r, k));
      new_cur.bias.push_back(cur.bias[r]);
    }
    DenseLayer new_next{next.in - drop.size(), next.out, {}, next.bias, next.activation};
    for (std::size_t r = 0; r < next.out; ++r)
      for (std::size_t k = 0; k < next.in; ++k)
        if (keep_unit(k)) new_next.weights.push_back(next.w(r, k));
    cur = std::move(new_cur);
    next = std::move(new_next);
  }
  return Network(std::move(layers), net.arch_id(), net.lineage());
}

/// Prune hidden units, shrink the network, then retrain.
inline Network filter_prune(const Network& net, double c, const Dataset& data, const TrainConfig& cfg) {
  const auto shrunk = remove_hidden_units(net, filter_prune_selection(net, c));
  std::ostringstream tag;
  tag << ";fp:" << c;
  const Network tagged(shrunk.layers(), net.arch_id() + "/fp", net.lineage() + tag.str());
  return train(tagged, data, cfg);
}

enum class PruneMode { weight, filter };

/// 1/16 when every hidden width divides by 16, else 1 / smallest hidden width.
inline double default_filter_step(const Network& net) {
  std::size_t min_width = SIZE_MAX;
  bool all16 = true;
  for (std::size_t li = 0; li + 1 < net.layers().size(); ++li) {
    const auto w = net.layers()[li].out;
    min_width = std::min(min_width, w);
    all16 = all16 && w % 16 == 0;
  }
  if (min_width == SIZE_MAX) return 1.0 / 16.0;
  return all16 ? 1.0 / 16.0 : 1.0 / static_cast<double>(min_width);
}

struct LadderMember {
  double fraction;
  Network net;
  double test_accuracy;
};

/// Increases the pruning fraction in `step` increments, keeping every pruned and retrained
/// network whose test-accuracy loss stays within `max_acc_loss`; stops at the first violation.
inline std::vector<LadderMember> pruning_ladder(const Network& net, const Dataset& train_data, const Dataset& test,
                                                PruneMode mode, double step, const TrainConfig& cfg,
                                                double max_acc_loss = 0.03) {
  if (!(step > 0.0 && step < 1.0)) throw InputError("ladder step must lie in (0, 1)");
  const double base = accuracy(net, test);
  std::vector<LadderMember> out;
  for (std::size_t m = 1;; ++m) {
    const double fraction = static_cast<double>(m) * step;
    if (fraction >= 1.0 - 1e-12) break;
    TrainConfig c = cfg;
    c.seed = derive_seed(cfg.seed, {m});
    Network pruned = mode == PruneMode::weight ? weight_prune(net, fraction, train_data, c)
                                               : filter_prune(net, fraction, train_data, c);
    const double acc = accuracy(pruned, test);
    if (base - acc > max_acc_loss) break;
    out.push_back({fraction, std::move(pruned), acc});
  }
  return out;
}

struct SuiteConfig {
  std::size_t n_same_arch = 10;
  std::size_t n_diff_arch = 5;
  std::size_t n_forests = 5;
  std::size_t n_trees = 20;
  std::string alt_arch = "tiny-MLP";
  TrainConfig retrain;   // recipe for negatives trained from scratch
  TrainConfig finetune;  // recipe for post-processing and ladder retraining
  double wp_step = 0.1;
  double fp_step = 0.0;  // 0 picks default_filter_step
  double max_acc_loss = 0.03;
  bool weight_ladder = true;
  bool filter_ladder = true;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Fine-tune recipe defaulting to 20% of the original epochs (at least one).
inline TrainConfig default_finetune(const TrainConfig& original) {
  TrainConfig c = original;
  c.epochs = std::max<std::size_t>(1, (original.epochs + 4) / 5);
  return c;
}

/// Builds positives (FTLL, FTAL, RTLL, RTAL, WP and FP ladders) and negatives (same-arch and
/// alternative-arch networks trained from scratch, random forests). Member seeds derive from
/// (suite seed, kind, index), so the set does not depend on the thread count.
inline SuspectSet build_suspect_suite(const Network& target, const Dataset& train_data, const Dataset& test,
                                      const SuiteConfig& cfg) {
  struct Task {
    std::string kind;
    std::size_t index;
  };
  std::vector<Task> tasks{{"FTLL", 0}, {"FTAL", 0}, {"RTLL", 0}, {"RTAL", 0}};
  if (cfg.weight_ladder) tasks.push_back({"WP", 0});
  if (cfg.filter_ladder) tasks.push_back({"FP", 0});
  for (std::size_t i = 0; i < cfg.n_same_arch; ++i) tasks.push_back({"same-arch", i});
  for (std::size_t i = 0; i < cfg.n_diff_arch; ++i) tasks.push_back({"diff-arch", i});
  for (std::size_t i = 0; i < cfg.n_forests; ++i) tasks.push_back({"forest", i});

  std::vector<std::vector<SuspectEntry>> results(tasks.size());
  parallel_for(tasks.size(), cfg.threads, [&](std::size_t t) {
    const auto& task = tasks[t];
    const std::uint64_t seed = derive_seed(cfg.seed, {tag_hash(task.kind), task.index});
    TrainConfig ft = cfg.finetune;
    ft.seed = derive_seed(seed, {1});
    auto& out = results[t];
    if (task.kind == "FTLL") {
      out.push_back(make_entry("FTLL", 0.0, seed, ftll(target, train_data, ft), test));
    } else if (task.kind == "FTAL") {
      out.push_back(make_entry("FTAL", 0.0, seed, ftal(target, train_data, ft), test));
    } else if (task.kind == "RTLL") {
      out.push_back(make_entry("RTLL", 0.0, seed, rtll(target, train_data, ft, derive_seed(seed, {2})), test));
    } else if (task.kind == "RTAL") {
      out.push_back(make_entry("RTAL", 0.0, seed, rtal(target, train_data, ft, derive_seed(seed, {2})), test));
    } else if (task.kind == "WP" || task.kind == "FP") {
      const bool wp = task.kind == "WP";
      const double step = wp ? cfg.wp_step : (cfg.fp_step > 0.0 ? cfg.fp_step : default_filter_step(target));
      auto ladder = pruning_ladder(target, train_data, test, wp ? PruneMode::weight : PruneMode::filter, step, ft,
                                   cfg.max_acc_loss);
      for (auto& member : ladder) out.push_back(make_entry(task.kind, member.fraction, seed, std::move(member.net), test));
    } else if (task.kind == "same-arch" || task.kind == "diff-arch") {
      const std::string arch = task.kind == "same-arch" ? target.arch_id() : cfg.alt_arch;
      TrainConfig rc = cfg.retrain;
      rc.seed = derive_seed(seed, {1});
      const auto init = make_architecture(arch, target.input_dim(), target.num_classes(), derive_seed(seed, {0}));
      out.push_back(make_entry(task.kind, 0.0, seed, train(init, train_data, rc), test));
    } else {
      out.push_back(make_entry("forest", 0.0, seed, train_forest(train_data, cfg.n_trees, seed), test));
    }
  });
  SuspectSet set;
  for (auto& r : results)
    for (auto& e : r) set.entries.push_back(std::move(e));
  return set;
}

inline nlohmann::json suite_manifest(const SuspectSet& set, const std::vector<std::string>& paths) {
  nlohmann::json members = nlohmann::json::array();
  for (std::size_t i = 0; i < set.entries.size(); ++i) {
    const auto& e = set.entries[i];
    nlohmann::json m{{"kind", e.kind},   {"tag", to_string(e.tag)},           {"fraction", e.fraction},
                     {"seed", e.seed},   {"test_accuracy", e.test_accuracy}, {"digest", e.oracle->descriptor().digest}};
    if (i < paths.size()) m["path"] = paths[i];
    members.push_back(std::move(m));
  }
  return {{"version", 1}, {"members", std::move(members)}};
}

/// Writes each member as a model file in `dir` plus manifest.json; returns the manifest path.
inline std::string save_suite(const SuspectSet& set, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> paths;
  for (std::size_t i = 0; i < set.entries.size(); ++i) {
    std::ostringstream name;
    name << "member_" << (i < 10 ? "0" : "") << i << "_" << set.entries[i].kind << ".bmk";
    save_model(set.entries[i].model, (std::filesystem::path(dir) / name.str()).string());
    paths.push_back(name.str());
  }
  const auto manifest = (std::filesystem::path(dir) / "manifest.json").string();
  write_file(manifest, suite_manifest(set, paths).dump(1) + "\n");
  return manifest;
}

/// Loads a suite manifest; member paths are resolved relative to the manifest's directory.
inline SuspectSet load_suite(const std::string& manifest_path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("suite manifest is not valid JSON: " + std::string(e.what()));
  }
  const auto base = std::filesystem::path(manifest_path).parent_path();
  SuspectSet set;
  try {
    for (const auto& m : j.at("members")) {
      SuspectEntry e;
      e.kind = m.at("kind").get<std::string>();
      if (!is_known_kind(e.kind)) throw FormatError("unknown suspect kind '" + e.kind + "'");
      const std::string tag = m.at("tag").get<std::string>();
      e.tag = tag == "positive" ? SuspectTag::positive : SuspectTag::negative;
      if ((e.tag == SuspectTag::positive) != is_positive_kind(e.kind))
        throw FormatError("suspect kind '" + e.kind + "' carries inconsistent tag '" + tag + "'");
      e.fraction = m.value("fraction", 0.0);
      e.seed = m.value("seed", std::uint64_t{0});
      e.test_accuracy = m.value("test_accuracy", 0.0);
      e.model = load_any_model((base / m.at("path").get<std::string>()).string());
      e.oracle = make_oracle(e.model);
      set.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed suite manifest: ") + e.what());
  }
  return set;
}

}  // namespace ipguard
