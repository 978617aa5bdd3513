#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "setsum/ops.hpp"
#include "setsum/rng.hpp"
#include "setsum/tensor.hpp"

namespace setsum {

// Named parameter tensors in declaration order.
class ParameterStore {
 public:
  std::size_t add(std::string name, Tensor value);

  std::size_t size() const noexcept { return values_.size(); }
  const std::string& name(std::size_t slot) const { return names_.at(slot); }
  const Tensor& value(std::size_t slot) const { return values_.at(slot); }
  Tensor& value(std::size_t slot) { return values_.at(slot); }
  std::optional<std::size_t> find(const std::string& name) const;

  // Summed element count of all parameters.
  std::size_t element_count() const;

  friend bool operator==(const ParameterStore&, const ParameterStore&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

// One gradient tensor per parameter slot, same shapes as the parameters.
using GradientMap = std::vector<Tensor>;

GradientMap zero_gradients(const ParameterStore& params);
void accumulate(GradientMap& into, const GradientMap& from, double scale = 1.0);

using NodeId = std::size_t;

enum class OpKind {
  constant,
  parameter,
  conv,
  relu,
  concat_channels,
  global_avg_pool,
  fully_connected,
  dropout,
  add,
  subtract,
  multiply,
  square,
  abs,
  sum,
  scale,
};

// Reverse-mode autodiff tape. Nodes are appended in evaluation order, so the
// node list is always topologically sorted. Parameter leaves read from a
// ParameterStore; each slot maps to a single leaf node, so every use of a
// parameter (including weight-shared branches) accumulates into one gradient.
class Graph {
 public:
  Graph() = default;
  explicit Graph(const ParameterStore& params) : params_(&params) {}

  NodeId constant(Tensor value);
  NodeId parameter(std::size_t slot);

  NodeId conv(NodeId input, NodeId kernel, std::optional<NodeId> bias, ops::ConvParams params);
  NodeId relu(NodeId input);
  NodeId concat_channels(NodeId a, NodeId b);
  NodeId global_avg_pool(NodeId input);
  NodeId fully_connected(NodeId input, NodeId weights, std::optional<NodeId> bias);
  // Inverted dropout; identity (no node) in inference mode or at rate 0.
  NodeId dropout(NodeId input, double rate, bool training, Rng& rng);
  NodeId add(NodeId a, NodeId b);
  NodeId subtract(NodeId a, NodeId b);
  NodeId multiply(NodeId a, NodeId b);
  NodeId square(NodeId input);
  // Subgradient 0 at the kink.
  NodeId abs(NodeId input);
  // Sum of all elements, as a scalar.
  NodeId sum(NodeId input);
  NodeId scale(NodeId input, double factor);

  const Tensor& value(NodeId node) const { return nodes_.at(node).value; }
  OpKind kind(NodeId node) const { return nodes_.at(node).kind; }
  const std::vector<NodeId>& inputs(NodeId node) const { return nodes_.at(node).inputs; }
  std::size_t node_count() const noexcept { return nodes_.size(); }

  // Reverse-mode pass from a scalar node, seeded with d(loss)/d(loss) = seed.
  // Returns gradients for every parameter slot of the bound store (zeros for
  // slots the loss does not reach). Rejects a non-scalar loss.
  GradientMap backpropagate(NodeId loss, double seed = 1.0);

  // Gradient of the last backpropagated loss with respect to any node.
  const Tensor& gradient(NodeId node) const;

 private:
  struct Node {
    OpKind kind;
    std::vector<NodeId> inputs;
    Tensor value;
    Tensor grad{};
    bool has_grad = false;
    std::size_t slot = 0;     // parameter slot
    ops::ConvParams conv{};   // conv geometry
    Tensor mask{};            // dropout mask
    double factor = 1.0;      // scale factor
  };

  NodeId push(Node node);
  void add_grad(NodeId node, const Tensor& grad);
  void check(NodeId node) const;

  const ParameterStore* params_ = nullptr;
  std::vector<Node> nodes_;
  std::vector<std::optional<NodeId>> param_nodes_;
};

}  // namespace setsum
