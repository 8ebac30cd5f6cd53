#include "clampcap/grad/graph.hpp"

#include "clampcap/error.hpp"

namespace clampcap::grad {

NodeId Graph::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

NodeId Graph::add(Tensor value, std::vector<NodeId> parents, BackwardFn backward) {
  const NodeId id = nodes_.size();
  bool needs = false;
  for (NodeId p : parents) {
    if (p >= id) {
      fail(ErrorKind::GraphCycle, "node " + std::to_string(id) + " references node " +
                                      std::to_string(p) + " that does not precede it");
    }
    needs = needs || nodes_[p].requires_grad;
  }
  Node n;
  n.value = std::move(value);
  n.parents = std::move(parents);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return id;
}

Tensor Graph::grad(NodeId id) const {
  const Node& n = nodes_.at(id);
  if (n.grad.empty()) return Tensor(n.value.shape(), 0.0);
  return n.grad;
}

Tensor& Graph::grad_buffer(NodeId id) {
  Node& n = nodes_.at(id);
  if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

void Graph::backward(NodeId loss) {
  if (nodes_.at(loss).value.size() != 1) {
    fail(ErrorKind::NonScalarLoss, "backward() needs a scalar, got shape " +
                                       nodes_[loss].value.shape_string());
  }
  for (auto& n : nodes_) n.grad = Tensor();
  grad_buffer(loss).fill(1.0);
  for (NodeId id = loss + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad.empty() || !n.backward) continue;
    n.backward(*this, id);
  }
}

}  // namespace clampcap::grad
