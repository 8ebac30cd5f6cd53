#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "clampcap/tensor.hpp"

namespace clampcap::grad {

using NodeId = std::size_t;

/// Reverse-mode tape. Nodes are appended in evaluation order and may only
/// reference earlier nodes, so the tape is a topological order and reverse
/// traversal visits every consumer before its producers.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, NodeId)>;

  /// Leaf holding a parameter (requires_grad) or a constant input.
  NodeId leaf(Tensor value, bool requires_grad = false);

  /// Appends an interior node. `backward` is dropped when no parent needs a
  /// gradient.
  NodeId add(Tensor value, std::vector<NodeId> parents, BackwardFn backward);

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }

  /// Gradient of the last backward() target w.r.t. this node; zeros if the
  /// node was not on any path to the loss.
  Tensor grad(NodeId id) const;

  /// Mutable gradient buffer, allocated as zeros on first use. For op
  /// implementations.
  Tensor& grad_buffer(NodeId id);
  bool has_grad(NodeId id) const { return !nodes_.at(id).grad.empty(); }

  /// Reverse-mode sweep from a scalar node. Throws NonScalarLoss.
  void backward(NodeId loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<NodeId> parents;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

}  // namespace clampcap::grad
