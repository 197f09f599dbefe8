#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "ipguard/data.hpp"
#include "ipguard/error.hpp"
#include "ipguard/random.hpp"

namespace ipguard {

struct TreeNode {
  // feature < 0 marks a leaf
  int feature = -1;
  double threshold = 0.0;
  std::size_t left = 0;
  std::size_t right = 0;
  std::vector<std::size_t> counts;

  bool operator==(const TreeNode&) const = default;
};

/// CART tree with axis-aligned splits `x[feature] <= threshold` going left.
struct DecisionTree {
  std::vector<TreeNode> nodes;

  std::size_t leaf_of(std::span<const double> x) const {
    std::size_t n = 0;
    while (nodes[n].feature >= 0) n = x[nodes[n].feature] <= nodes[n].threshold ? nodes[n].left : nodes[n].right;
    return n;
  }

  std::size_t predict(std::span<const double> x) const {
    const auto& counts = nodes[leaf_of(x)].counts;
    return static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  }

  bool operator==(const DecisionTree&) const = default;
};

struct Forest {
  std::vector<DecisionTree> trees;
  std::size_t d = 0;
  std::size_t c = 0;
  std::uint64_t seed = 0;

  bool operator==(const Forest&) const = default;
};

namespace detail {

inline double gini(const std::vector<std::size_t>& counts, std::size_t total) {
  if (total == 0) return 0.0;
  double s = 0.0;
  for (std::size_t v : counts) {
    const double p = static_cast<double>(v) / static_cast<double>(total);
    s += p * p;
  }
  return 1.0 - s;
}

struct TreeBuilder {
  const Dataset& data;
  std::size_t max_features;
  Rng& rng;
  DecisionTree tree;

  std::size_t build(std::vector<std::size_t>& idx) {
    const std::size_t node = tree.nodes.size();
    tree.nodes.push_back({});
    std::vector<std::size_t> counts(data.c, 0);
    for (std::size_t i : idx) ++counts[data.labels[i]];
    tree.nodes[node].counts = counts;
    const auto nonzero = std::count_if(counts.begin(), counts.end(), [](std::size_t v) { return v > 0; });
    if (nonzero <= 1 || idx.size() < 2) return node;

    std::vector<std::size_t> features(data.d);
    std::iota(features.begin(), features.end(), 0);
    rng.shuffle(features.begin(), features.end());

    const double parent = gini(counts, idx.size());
    double best_score = parent;
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<std::pair<double, std::size_t>> column(idx.size());
    // Keep drawing features past max_features until a valid split turns up.
    for (std::size_t fi = 0; fi < features.size(); ++fi) {
      if (fi >= max_features && best_feature >= 0) break;
      const std::size_t f = features[fi];
      for (std::size_t m = 0; m < idx.size(); ++m) column[m] = {data.point(idx[m])[f], data.labels[idx[m]]};
      std::sort(column.begin(), column.end());
      std::vector<std::size_t> left(data.c, 0);
      std::vector<std::size_t> right = counts;
      for (std::size_t m = 0; m + 1 < column.size(); ++m) {
        ++left[column[m].second];
        --right[column[m].second];
        if (column[m].first == column[m + 1].first) continue;
        const double nl = static_cast<double>(m + 1);
        const double nr = static_cast<double>(column.size() - m - 1);
        const double score = (nl * gini(left, m + 1) + nr * gini(right, column.size() - m - 1)) / (nl + nr);
        if (score < best_score - 1e-15 || (best_feature < 0 && score <= best_score)) {
          best_score = score;
          best_feature = static_cast<int>(f);
          best_threshold = 0.5 * (column[m].first + column[m + 1].first);
        }
      }
    }
    if (best_feature < 0) return node;

    std::vector<std::size_t> left_idx, right_idx;
    for (std::size_t i : idx)
      (data.point(i)[best_feature] <= best_threshold ? left_idx : right_idx).push_back(i);
    idx.clear();
    idx.shrink_to_fit();
    const std::size_t l = build(left_idx);
    const std::size_t r = build(right_idx);
    tree.nodes[node].feature = best_feature;
    tree.nodes[node].threshold = best_threshold;
    tree.nodes[node].left = l;
    tree.nodes[node].right = r;
    return node;
  }
};

}  // namespace detail

/// Bootstrap-aggregated CART forest, grown to purity with sqrt(d) candidate features per split.
inline Forest train_forest(const Dataset& data, std::size_t n_trees = 20, std::uint64_t seed = 0) {
  if (data.size() == 0) throw InputError("cannot train a forest on an empty dataset");
  data.validate();
  if (n_trees == 0) throw InputError("forest needs at least one tree");
  Forest forest{{}, data.d, data.c, seed};
  const std::size_t max_features =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(data.d)))));
  for (std::size_t t = 0; t < n_trees; ++t) {
    Rng rng(derive_seed(seed, {t}));
    std::vector<std::size_t> sample(data.size());
    for (auto& s : sample) s = rng.below(data.size());
    detail::TreeBuilder builder{data, max_features, rng, {}};
    builder.build(sample);
    forest.trees.push_back(std::move(builder.tree));
  }
  return forest;
}

/// Majority vote over trees; ties go to the smallest label.
inline std::size_t forest_predict(const Forest& f, std::span<const double> x) {
  if (x.size() != f.d)
    throw InputError("input has dimension " + std::to_string(x.size()) + ", forest expects " + std::to_string(f.d));
  std::vector<std::size_t> votes(f.c, 0);
  for (const auto& t : f.trees) ++votes[t.predict(x)];
  return static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

inline nlohmann::json forest_to_json(const Forest& f) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : f.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.nodes) {
      if (n.feature < 0)
        nodes.push_back({{"counts", n.counts}});
      else
        nodes.push_back({{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right},
                         {"counts", n.counts}});
    }
    trees.push_back(std::move(nodes));
  }
  return {{"d", f.d}, {"c", f.c}, {"seed", f.seed}, {"trees", std::move(trees)}};
}

inline Forest forest_from_json(const nlohmann::json& j) {
  try {
    Forest f;
    f.d = j.at("d").get<std::size_t>();
    f.c = j.at("c").get<std::size_t>();
    f.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& tj : j.at("trees")) {
      DecisionTree t;
      for (const auto& nj : tj) {
        TreeNode n;
        n.counts = nj.at("counts").get<std::vector<std::size_t>>();
        if (n.counts.size() != f.c) throw FormatError("leaf distribution has the wrong class count");
        if (nj.contains("feature")) {
          n.feature = nj.at("feature").get<int>();
          n.threshold = nj.at("threshold").get<double>();
          n.left = nj.at("left").get<std::size_t>();
          n.right = nj.at("right").get<std::size_t>();
          if (n.feature < 0 || static_cast<std::size_t>(n.feature) >= f.d)
            throw FormatError("tree split feature out of range");
        }
        t.nodes.push_back(std::move(n));
      }
      for (const auto& n : t.nodes)
        if (n.feature >= 0 && (n.left >= t.nodes.size() || n.right >= t.nodes.size()))
          throw FormatError("tree child index out of range");
      if (t.nodes.empty()) throw FormatError("empty tree");
      f.trees.push_back(std::move(t));
    }
    if (f.trees.empty()) throw FormatError("forest has no trees");
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed forest: ") + e.what());
  }
}

}  // namespace ipguard
