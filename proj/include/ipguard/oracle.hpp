#pragma once

#include <memory>
#include <span>
#include <string>
#include <variant>

#include "ipguard/forest.hpp"
#include "ipguard/model_io.hpp"
#include "ipguard/nn.hpp"

namespace ipguard {

struct OracleDescriptor {
  std::string kind;  // network | forest | remote
  std::string digest;
};

/// Label-only prediction API over the unit box.
class ClassifierOracle {
 public:
  virtual ~ClassifierOracle() = default;

  /// Expected query dimension; 0 means the oracle adapts dimensions itself.
  virtual std::size_t input_dim() const = 0;
  virtual std::size_t query(std::span<const double> x) const = 0;
  virtual OracleDescriptor descriptor() const = 0;
  virtual bool concurrent_queries() const { return true; }
};

class NetworkOracle final : public ClassifierOracle {
 public:
  explicit NetworkOracle(Network net) : net_(std::move(net)), digest_(model_digest(net_)) {}

  std::size_t input_dim() const override { return net_.input_dim(); }
  std::size_t query(std::span<const double> x) const override { return predict_label(net_, x); }
  OracleDescriptor descriptor() const override { return {"network", digest_}; }
  const Network& network() const { return net_; }

 private:
  Network net_;
  std::string digest_;
};

class ForestOracle final : public ClassifierOracle {
 public:
  explicit ForestOracle(Forest forest) : forest_(std::move(forest)), digest_(model_digest(forest_)) {}

  std::size_t input_dim() const override { return forest_.d; }
  std::size_t query(std::span<const double> x) const override { return forest_predict(forest_, x); }
  OracleDescriptor descriptor() const override { return {"forest", digest_}; }

 private:
  Forest forest_;
  std::string digest_;
};

inline std::shared_ptr<const ClassifierOracle> make_oracle(Model model) {
  if (auto* net = std::get_if<Network>(&model)) return std::make_shared<NetworkOracle>(std::move(*net));
  return std::make_shared<ForestOracle>(std::get<Forest>(std::move(model)));
}

}  // namespace ipguard
