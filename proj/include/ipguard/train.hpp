#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "ipguard/data.hpp"
#include "ipguard/error.hpp"
#include "ipguard/nn.hpp"
#include "ipguard/objectives.hpp"
#include "ipguard/random.hpp"

namespace ipguard {

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t size) : m(size, 0.0), v(size, 0.0) {}
};

/// One bias-corrected Adam update of `params` in place.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw InputError("adam_step: parameter, gradient and state shapes differ");
  ++state.t;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

enum class Optimizer { sgd, adam };

struct TrainConfig {
  Optimizer optimizer = Optimizer::adam;
  double learning_rate = 0.01;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double l2_penalty = 0.0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw InputError("learning_rate must be positive");
    if (batch_size == 0) throw InputError("batch_size must be positive");
    if (!(l2_penalty >= 0.0)) throw InputError("l2_penalty must be non-negative");
  }
};

/// Restricts which parameters training may touch.
struct TrainOptions {
  /// Per-layer flag; empty means every layer trains.
  std::vector<bool> trainable;
  /// Per-layer weight masks (1 keeps, 0 forces zero after every update); empty means none.
  std::vector<std::vector<double>> weight_masks;
};

inline void apply_weight_masks(std::vector<DenseLayer>& layers, const std::vector<std::vector<double>>& masks) {
  for (std::size_t li = 0; li < masks.size() && li < layers.size(); ++li) {
    if (masks[li].empty()) continue;
    for (std::size_t k = 0; k < layers[li].weights.size(); ++k)
      if (masks[li][k] == 0.0) layers[li].weights[k] = 0.0;
  }
}

/// Minibatch cross-entropy training. Deterministic for a given configuration.
inline Network train(const Network& net, const Dataset& data, const TrainConfig& cfg,
                     const TrainOptions& opts = {}) {
  cfg.validate();
  data.validate();
  if (data.d != net.input_dim())
    throw InputError("dataset dimension " + std::to_string(data.d) + " does not match network input " +
                     std::to_string(net.input_dim()));
  for (std::size_t lab : data.labels)
    if (lab >= net.num_classes()) throw InputError("dataset label exceeds network class count");
  if (cfg.batch_size > data.size()) throw InputError("batch_size exceeds dataset size");

  std::vector<DenseLayer> layers = net.layers();
  const std::size_t n_layers = layers.size();
  auto is_trainable = [&](std::size_t li) { return opts.trainable.empty() || opts.trainable[li]; };
  apply_weight_masks(layers, opts.weight_masks);

  std::vector<AdamState> w_state;
  std::vector<AdamState> b_state;
  for (const auto& l : layers) {
    w_state.emplace_back(l.weights.size());
    b_state.emplace_back(l.bias.size());
  }

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> dz(net.num_classes());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      ParamGrads grads(layers);
      for (std::size_t b = start; b < end; ++b) {
        const auto x = data.point(order[b]);
        const auto trace = detail::forward_layers(layers, x);
        CrossEntropy{data.labels[order[b]]}(trace.logits(), dz);
        backward(layers, x, trace, dz, {}, &grads);
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      for (std::size_t li = 0; li < n_layers; ++li) {
        if (!is_trainable(li)) continue;
        auto& gw = grads.weights[li];
        auto& gb = grads.bias[li];
        for (std::size_t k = 0; k < gw.size(); ++k)
          gw[k] = gw[k] * scale + cfg.l2_penalty * layers[li].weights[k];
        for (double& g : gb) g *= scale;
        if (cfg.optimizer == Optimizer::adam) {
          adam_step(layers[li].weights, gw, w_state[li], cfg.learning_rate);
          adam_step(layers[li].bias, gb, b_state[li], cfg.learning_rate);
        } else {
          for (std::size_t k = 0; k < gw.size(); ++k) layers[li].weights[k] -= cfg.learning_rate * gw[k];
          for (std::size_t k = 0; k < gb.size(); ++k) layers[li].bias[k] -= cfg.learning_rate * gb[k];
        }
      }
      apply_weight_masks(layers, opts.weight_masks);
    }
  }
  std::string lineage = net.lineage();
  if (cfg.epochs > 0) lineage += (lineage.empty() ? "" : ";") + std::string("train:") + std::to_string(cfg.seed);
  return Network(std::move(layers), net.arch_id(), std::move(lineage));
}

/// Fraction of points whose predicted label equals the stored label.
template <typename Predict>
double accuracy(const Dataset& data, Predict&& predict) {
  if (data.size() == 0) throw InputError("accuracy of an empty dataset");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (predict(data.point(i)) == data.labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

inline double accuracy(const Network& net, const Dataset& data) {
  return accuracy(data, [&](std::span<const double> x) { return predict_label(net, x); });
}

inline std::string to_string(Optimizer o) { return o == Optimizer::adam ? "adam" : "sgd"; }

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"optimizer", to_string(c.optimizer)}, {"learning_rate", c.learning_rate}, {"epochs", c.epochs},
          {"batch_size", c.batch_size},          {"seed", c.seed},                   {"l2_penalty", c.l2_penalty}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {}) {
  const std::string opt = j.value("optimizer", to_string(base.optimizer));
  if (opt != "adam" && opt != "sgd") throw InputError("unknown optimizer '" + opt + "'");
  base.optimizer = opt == "adam" ? Optimizer::adam : Optimizer::sgd;
  base.learning_rate = j.value("learning_rate", base.learning_rate);
  base.epochs = j.value("epochs", base.epochs);
  base.batch_size = j.value("batch_size", base.batch_size);
  base.seed = j.value("seed", base.seed);
  base.l2_penalty = j.value("l2_penalty", base.l2_penalty);
  return base;
}

}  // namespace ipguard
