#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ipguard/error.hpp"
#include "ipguard/random.hpp"

namespace ipguard {

enum class Activation { relu, identity };

inline std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  throw FormatError("unknown activation '" + s + "'");
}

/// Fully connected layer. `weights` is row-major with `out` rows and `in` columns.
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;
  std::vector<double> bias;
  Activation activation = Activation::relu;

  double& w(std::size_t row, std::size_t col) { return weights[row * in + col]; }
  double w(std::size_t row, std::size_t col) const { return weights[row * in + col]; }

  bool operator==(const DenseLayer&) const = default;
};

/// Feedforward classifier. The forward pass returns logits; softmax is separate.
class Network {
 public:
  Network() = default;

  Network(std::vector<DenseLayer> layers, std::string arch_id, std::string lineage = {})
      : layers_(std::move(layers)), arch_id_(std::move(arch_id)), lineage_(std::move(lineage)) {
    validate();
  }

  std::size_t input_dim() const { return layers_.front().in; }
  std::size_t num_classes() const { return layers_.back().out; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  const std::string& arch_id() const { return arch_id_; }
  const std::string& lineage() const { return lineage_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
    return n;
  }

  bool operator==(const Network&) const = default;

 private:
  void validate() const {
    if (layers_.empty()) throw InputError("network needs at least one layer");
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      const auto& l = layers_[li];
      if (l.in == 0 || l.out == 0) throw InputError("layer " + std::to_string(li) + " has a zero dimension");
      if (l.weights.size() != l.in * l.out || l.bias.size() != l.out)
        throw InputError("layer " + std::to_string(li) + " parameter shape mismatch");
      if (li > 0 && layers_[li - 1].out != l.in)
        throw InputError("layer " + std::to_string(li) + " input does not chain with previous output");
      for (double v : l.weights)
        if (!std::isfinite(v)) throw NumericError("non-finite weight in layer " + std::to_string(li));
      for (double v : l.bias)
        if (!std::isfinite(v)) throw NumericError("non-finite bias in layer " + std::to_string(li));
    }
    if (num_classes() < 2) throw InputError("network must have at least 2 classes");
  }

  std::vector<DenseLayer> layers_;
  std::string arch_id_;
  std::string lineage_;
};

/// Glorot-uniform limit sqrt(6 / (fan_in + fan_out)).
inline double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

inline void glorot_init(DenseLayer& layer, Rng& rng) {
  const double limit = glorot_limit(layer.in, layer.out);
  for (double& v : layer.weights) v = rng.uniform(-limit, limit);
  std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
}

/// ReLU MLP with the given hidden widths and an identity output layer.
inline Network make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                        std::size_t num_classes, std::uint64_t seed, std::string arch_id) {
  Rng rng(seed);
  std::vector<DenseLayer> layers;
  std::size_t prev = input_dim;
  auto add = [&](std::size_t out, Activation act) {
    DenseLayer l{prev, out, std::vector<double>(prev * out), std::vector<double>(out), act};
    glorot_init(l, rng);
    layers.push_back(std::move(l));
    prev = out;
  };
  for (std::size_t h : hidden) add(h, Activation::relu);
  add(num_classes, Activation::identity);
  return Network(std::move(layers), std::move(arch_id), "init:" + std::to_string(seed));
}

inline const std::vector<std::size_t>& hidden_widths_for(const std::string& arch_id) {
  static const std::vector<std::size_t> small{32, 32};
  static const std::vector<std::size_t> tiny{16};
  if (arch_id == "small-MLP") return small;
  if (arch_id == "tiny-MLP") return tiny;
  throw InputError("unknown architecture '" + arch_id + "' (expected small-MLP or tiny-MLP)");
}

inline Network make_architecture(const std::string& arch_id, std::size_t input_dim,
                                 std::size_t num_classes, std::uint64_t seed) {
  return make_mlp(input_dim, hidden_widths_for(arch_id), num_classes, seed, arch_id);
}

/// Pre-activation and post-activation values of every layer for one input.
struct ForwardTrace {
  std::vector<std::vector<double>> pre;
  std::vector<std::vector<double>> post;

  std::span<const double> logits() const { return post.back(); }
};

inline void check_input(const Network& net, std::span<const double> x) {
  if (x.size() != net.input_dim())
    throw InputError("input has dimension " + std::to_string(x.size()) + ", network expects " +
                     std::to_string(net.input_dim()));
  for (double v : x)
    if (!std::isfinite(v)) throw InputError("input contains a non-finite value");
}

namespace detail {

inline ForwardTrace forward_layers(const std::vector<DenseLayer>& layers, std::span<const double> x) {
  ForwardTrace trace;
  trace.pre.reserve(layers.size());
  trace.post.reserve(layers.size());
  std::span<const double> current = x;
  for (const auto& l : layers) {
    std::vector<double> z(l.out);
    for (std::size_t r = 0; r < l.out; ++r) {
      double acc = l.bias[r];
      const double* row = &l.weights[r * l.in];
      for (std::size_t c = 0; c < l.in; ++c) acc += row[c] * current[c];
      if (!std::isfinite(acc)) throw NumericError("non-finite activation in forward pass");
      z[r] = acc;
    }
    std::vector<double> a = z;
    if (l.activation == Activation::relu)
      for (double& v : a) v = v > 0.0 ? v : 0.0;
    trace.pre.push_back(std::move(z));
    trace.post.push_back(std::move(a));
    current = trace.post.back();
  }
  return trace;
}

}  // namespace detail

inline ForwardTrace forward_trace(const Network& net, std::span<const double> x) {
  check_input(net, x);
  return detail::forward_layers(net.layers(), x);
}

inline std::vector<double> forward_logits(const Network& net, std::span<const double> x) {
  auto trace = forward_trace(net, x);
  return std::move(trace.post.back());
}

inline std::vector<double> softmax(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - m);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

/// Index of the largest entry; ties go to the smallest index.
inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

inline std::size_t predict_label(const Network& net, std::span<const double> x) {
  const auto z = forward_logits(net, x);
  return argmax(z);
}

/// Parameter gradients with the same layout as the network's layers.
struct ParamGrads {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> bias;

  explicit ParamGrads(const std::vector<DenseLayer>& layers) {
    for (const auto& l : layers) {
      weights.emplace_back(l.weights.size(), 0.0);
      bias.emplace_back(l.bias.size(), 0.0);
    }
  }
  explicit ParamGrads(const Network& net) : ParamGrads(net.layers()) {}
};

/// Reverse-mode pass from dL/dlogits. Writes dL/dx into `dx` when non-empty and
/// accumulates parameter gradients into `grads` when non-null. ReLU subgradient at 0 is 0.
inline void backward(const std::vector<DenseLayer>& layers, std::span<const double> x,
                     const ForwardTrace& trace, std::span<const double> dlogits, std::span<double> dx,
                     ParamGrads* grads) {
  std::vector<double> delta(dlogits.begin(), dlogits.end());
  for (std::size_t li = layers.size(); li-- > 0;) {
    const auto& l = layers[li];
    if (l.activation == Activation::relu)
      for (std::size_t r = 0; r < l.out; ++r)
        if (!(trace.pre[li][r] > 0.0)) delta[r] = 0.0;
    std::span<const double> input = li == 0 ? x : std::span<const double>(trace.post[li - 1]);
    if (grads) {
      auto& gw = grads->weights[li];
      auto& gb = grads->bias[li];
      for (std::size_t r = 0; r < l.out; ++r) {
        if (delta[r] == 0.0) continue;
        gb[r] += delta[r];
        double* row = &gw[r * l.in];
        for (std::size_t c = 0; c < l.in; ++c) row[c] += delta[r] * input[c];
      }
    }
    if (li == 0 && dx.empty()) break;
    std::vector<double> prev(l.in, 0.0);
    for (std::size_t r = 0; r < l.out; ++r) {
      if (delta[r] == 0.0) continue;
      const double* row = &l.weights[r * l.in];
      for (std::size_t c = 0; c < l.in; ++c) prev[c] += delta[r] * row[c];
    }
    for (double v : prev)
      if (!std::isfinite(v)) throw NumericError("non-finite value in backward pass");
    if (li == 0) std::copy(prev.begin(), prev.end(), dx.begin());
    delta = std::move(prev);
  }
}

inline void backward(const Network& net, std::span<const double> x, const ForwardTrace& trace,
                     std::span<const double> dlogits, std::span<double> dx, ParamGrads* grads) {
  backward(net.layers(), x, trace, dlogits, dx, grads);
}

/// A scalar function of the logit vector: returns its value and writes dValue/dlogits.
template <typename F>
concept LogitObjective = requires(const F& f, std::span<const double> z, std::span<double> dz) {
  { f(z, dz) } -> std::convertible_to<double>;
};

struct ValueAndGradient {
  double value = 0.0;
  std::vector<double> gradient;
};

/// Value of objective(Z(x)) and its gradient with respect to x.
template <LogitObjective F>
ValueAndGradient value_and_input_gradient(const Network& net, std::span<const double> x, const F& objective) {
  const auto trace = forward_trace(net, x);
  std::vector<double> dz(net.num_classes(), 0.0);
  ValueAndGradient out;
  out.value = objective(trace.logits(), dz);
  if (!std::isfinite(out.value)) throw NumericError("objective evaluated to a non-finite value");
  out.gradient.assign(x.size(), 0.0);
  backward(net, x, trace, dz, out.gradient, nullptr);
  return out;
}

template <LogitObjective F>
std::vector<double> input_gradient(const Network& net, std::span<const double> x, const F& objective) {
  return value_and_input_gradient(net, x, objective).gradient;
}

}  // namespace ipguard
