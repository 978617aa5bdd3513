#include "setsum/graph.hpp"

#include <cmath>
#include <stdexcept>

#include "setsum/errors.hpp"

namespace setsum {

std::size_t ParameterStore::add(std::string name, Tensor value) {
  if (find(name).has_value()) throw std::invalid_argument("duplicate parameter name " + name);
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

std::optional<std::size_t> ParameterStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  return std::nullopt;
}

std::size_t ParameterStore::element_count() const {
  std::size_t total = 0;
  for (const Tensor& t : values_) total += t.size();
  return total;
}

GradientMap zero_gradients(const ParameterStore& params) {
  GradientMap grads;
  grads.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) grads.emplace_back(params.value(i).shape());
  return grads;
}

void accumulate(GradientMap& into, const GradientMap& from, double scale) {
  if (into.size() != from.size()) throw ShapeError("accumulate: gradient maps differ in size");
  for (std::size_t i = 0; i < into.size(); ++i) {
    if (into[i].shape() != from[i].shape()) {
      throw ShapeError("accumulate: gradient " + std::to_string(i) + " shape mismatch");
    }
    for (std::size_t j = 0; j < into[i].size(); ++j) into[i][j] += scale * from[i][j];
  }
}

void Graph::check(NodeId node) const {
  if (node >= nodes_.size()) {
    throw std::out_of_range("graph node " + std::to_string(node) + " does not exist");
  }
}

NodeId Graph::push(Node node) {
  for (NodeId in : node.inputs) check(in);
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

NodeId Graph::constant(Tensor value) {
  Node n{OpKind::constant, {}, std::move(value)};
  return push(std::move(n));
}

NodeId Graph::parameter(std::size_t slot) {
  if (params_ == nullptr || slot >= params_->size()) {
    throw std::out_of_range("graph has no parameter slot " + std::to_string(slot));
  }
  if (param_nodes_.size() < params_->size()) param_nodes_.resize(params_->size());
  if (param_nodes_[slot]) return *param_nodes_[slot];
  Node n{OpKind::parameter, {}, params_->value(slot)};
  n.slot = slot;
  const NodeId id = push(std::move(n));
  param_nodes_[slot] = id;
  return id;
}

NodeId Graph::conv(NodeId input, NodeId kernel, std::optional<NodeId> bias,
                   ops::ConvParams params) {
  check(input);
  check(kernel);
  if (bias) check(*bias);
  Tensor out = ops::conv(value(input), value(kernel), bias ? &value(*bias) : nullptr, params);
  Node n{OpKind::conv, {input, kernel}, std::move(out)};
  if (bias) n.inputs.push_back(*bias);
  n.conv = params;
  return push(std::move(n));
}

NodeId Graph::relu(NodeId input) {
  check(input);
  return push(Node{OpKind::relu, {input}, ops::relu(value(input))});
}

NodeId Graph::concat_channels(NodeId a, NodeId b) {
  check(a);
  check(b);
  return push(Node{OpKind::concat_channels, {a, b}, ops::concat_channels(value(a), value(b))});
}

NodeId Graph::global_avg_pool(NodeId input) {
  check(input);
  return push(Node{OpKind::global_avg_pool, {input}, ops::global_avg_pool(value(input))});
}

NodeId Graph::fully_connected(NodeId input, NodeId weights, std::optional<NodeId> bias) {
  check(input);
  check(weights);
  if (bias) check(*bias);
  Tensor out =
      ops::fully_connected(value(input), value(weights), bias ? &value(*bias) : nullptr);
  Node n{OpKind::fully_connected, {input, weights}, std::move(out)};
  if (bias) n.inputs.push_back(*bias);
  return push(std::move(n));
}

NodeId Graph::dropout(NodeId input, double rate, bool training, Rng& rng) {
  check(input);
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("dropout rate must lie in [0,1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return input;
  Tensor mask = ops::dropout_mask(value(input).shape(), rate, rng);
  Node n{OpKind::dropout, {input}, ops::multiply(value(input), mask)};
  n.mask = std::move(mask);
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
  check(a);
  check(b);
  return push(Node{OpKind::add, {a, b}, value(a) + value(b)});
}

NodeId Graph::subtract(NodeId a, NodeId b) {
  check(a);
  check(b);
  return push(Node{OpKind::subtract, {a, b}, value(a) - value(b)});
}

NodeId Graph::multiply(NodeId a, NodeId b) {
  check(a);
  check(b);
  return push(Node{OpKind::multiply, {a, b}, ops::multiply(value(a), value(b))});
}

NodeId Graph::square(NodeId input) {
  check(input);
  return push(Node{OpKind::square, {input}, ops::multiply(value(input), value(input))});
}

NodeId Graph::abs(NodeId input) {
  check(input);
  Tensor out = value(input);
  for (double& v : out.data()) v = std::abs(v);
  return push(Node{OpKind::abs, {input}, std::move(out)});
}

NodeId Graph::sum(NodeId input) {
  check(input);
  double total = 0.0;
  for (double v : value(input).data()) total += v;
  return push(Node{OpKind::sum, {input}, Tensor::scalar(total)});
}

NodeId Graph::scale(NodeId input, double factor) {
  check(input);
  Node n{OpKind::scale, {input}, factor * value(input)};
  n.factor = factor;
  return push(std::move(n));
}

void Graph::add_grad(NodeId node, const Tensor& grad) {
  Node& n = nodes_[node];
  if (!n.has_grad) {
    n.grad = grad;
    n.has_grad = true;
  } else {
    n.grad += grad;
  }
}

const Tensor& Graph::gradient(NodeId node) const {
  check(node);
  const Node& n = nodes_[node];
  if (!n.has_grad) {
    throw std::logic_error("node " + std::to_string(node) +
                           " has no gradient; it is not upstream of the last loss");
  }
  return n.grad;
}

GradientMap Graph::backpropagate(NodeId loss, double seed) {
  check(loss);
  if (nodes_[loss].value.size() != 1) {
    throw ShapeError("backpropagate: loss node must be scalar, got shape " +
                     to_string(nodes_[loss].value.shape()));
  }
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  add_grad(loss, Tensor(nodes_[loss].value.shape(), seed));

  for (NodeId id = loss + 1; id-- > 0;) {
    if (!nodes_[id].has_grad) continue;
    // Copies keep references valid while add_grad mutates other nodes.
    const Tensor grad = nodes_[id].grad;
    const Node& n = nodes_[id];
    switch (n.kind) {
      case OpKind::constant:
      case OpKind::parameter:
        break;
      case OpKind::conv: {
        ops::ConvGradients g =
            ops::conv_backward(value(n.inputs[0]), value(n.inputs[1]), grad, n.conv);
        const std::vector<NodeId> in = n.inputs;
        add_grad(in[0], g.input);
        add_grad(in[1], g.kernel);
        if (in.size() == 3) add_grad(in[2], g.bias.reshaped(value(in[2]).shape()));
        break;
      }
      case OpKind::relu: {
        const NodeId in = n.inputs[0];
        add_grad(in, ops::relu_backward(value(in), grad));
        break;
      }
      case OpKind::concat_channels: {
        const NodeId a = n.inputs[0];
        const NodeId b = n.inputs[1];
        const std::size_t split = value(a).extent(0);
        add_grad(a, ops::slice_channels(grad, 0, split));
        add_grad(b, ops::slice_channels(grad, split, grad.extent(0)));
        break;
      }
      case OpKind::global_avg_pool: {
        const NodeId in = n.inputs[0];
        add_grad(in, ops::global_avg_pool_backward(value(in).shape(), grad));
        break;
      }
      case OpKind::fully_connected: {
        ops::FullyConnectedGradients g =
            ops::fully_connected_backward(value(n.inputs[0]), value(n.inputs[1]), grad);
        const std::vector<NodeId> in = n.inputs;
        add_grad(in[0], g.input.reshaped(value(in[0]).shape()));
        add_grad(in[1], g.weights);
        if (in.size() == 3) add_grad(in[2], g.bias.reshaped(value(in[2]).shape()));
        break;
      }
      case OpKind::dropout: {
        const NodeId in = n.inputs[0];
        add_grad(in, ops::multiply(grad, n.mask));
        break;
      }
      case OpKind::add: {
        const NodeId a = n.inputs[0];
        const NodeId b = n.inputs[1];
        add_grad(a, grad);
        add_grad(b, grad);
        break;
      }
      case OpKind::subtract: {
        const NodeId a = n.inputs[0];
        const NodeId b = n.inputs[1];
        add_grad(a, grad);
        add_grad(b, -1.0 * grad);
        break;
      }
      case OpKind::multiply: {
        const NodeId a = n.inputs[0];
        const NodeId b = n.inputs[1];
        const Tensor ga = ops::multiply(grad, value(b));
        const Tensor gb = ops::multiply(grad, value(a));
        add_grad(a, ga);
        add_grad(b, gb);
        break;
      }
      case OpKind::square: {
        const NodeId in = n.inputs[0];
        add_grad(in, 2.0 * ops::multiply(grad, value(in)));
        break;
      }
      case OpKind::abs: {
        const NodeId in = n.inputs[0];
        Tensor g = grad;
        const Tensor& x = value(in);
        for (std::size_t i = 0; i < g.size(); ++i) {
          g[i] *= x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0);
        }
        add_grad(in, g);
        break;
      }
      case OpKind::sum: {
        const NodeId in = n.inputs[0];
        add_grad(in, Tensor(value(in).shape(), grad.item()));
        break;
      }
      case OpKind::scale: {
        const NodeId in = n.inputs[0];
        add_grad(in, n.factor * grad);
        break;
      }
    }
  }

  GradientMap grads;
  if (params_ == nullptr) return grads;
  grads.reserve(params_->size());
  for (std::size_t slot = 0; slot < params_->size(); ++slot) {
    if (slot < param_nodes_.size() && param_nodes_[slot] && nodes_[*param_nodes_[slot]].has_grad) {
      grads.push_back(nodes_[*param_nodes_[slot]].grad);
    } else {
      grads.emplace_back(params_->value(slot).shape());
    }
  }
  return grads;
}

}  // namespace setsum
