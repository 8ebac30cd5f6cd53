#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "clampcap/grad/graph.hpp"
#include "clampcap/grad/ops.hpp"

namespace clampcap::grad {

/// GRU cell with separate input and recurrent biases for the candidate:
///   z  = sigmoid(W_z x + U_z h + b_z)
///   r  = sigmoid(W_r x + U_r h + b_r)
///   n  = tanh(W_n x + b_in + r * (U_n h + b_hn))
///   h' = (1 - z) * n + z * h
/// Input matrices are hidden x input, recurrent matrices hidden x hidden,
/// biases 1 x hidden.
struct GruCellParams {
  Tensor w_z, w_r, w_n;
  Tensor u_z, u_r, u_n;
  Tensor b_z, b_r, b_in, b_hn;

  GruCellParams() = default;
  GruCellParams(std::size_t input, std::size_t hidden);

  std::size_t input_size() const { return w_z.cols(); }
  std::size_t hidden_size() const { return w_z.rows(); }

  /// Visits the ten tensors in a fixed order with their member names.
  void for_each(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const;

  /// Uniform in [-1/sqrt(hidden), 1/sqrt(hidden)] for matrices, zero biases.
  void init_uniform(Rng& rng);
};

/// Graph handles for one cell's parameters.
struct GruNodes {
  NodeId w_z, w_r, w_n;
  NodeId u_z, u_r, u_n;
  NodeId b_z, b_r, b_in, b_hn;
  std::size_t hidden = 0;
};

GruNodes bind_gru(Graph& g, const GruCellParams& p, bool requires_grad);

/// Input-side pre-activations W_z x + b_z, W_r x + b_r, W_n x + b_in.
struct GruInput {
  NodeId z, r, n;
};

GruInput gru_project_input(Graph& g, NodeId x, const GruNodes& p);

/// One step from precomputed input projections.
NodeId gru_step(Graph& g, const GruInput& in, NodeId h, const GruNodes& p);

/// x: B x input, h: B x hidden -> B x hidden.
NodeId gru_cell(Graph& g, NodeId x, NodeId h, const GruNodes& p);

/// Runs the cell over `xs` (each B x input) from `h0`; `reverse` scans from the
/// last step to the first. Outputs are returned in input order.
std::vector<NodeId> gru_scan(Graph& g, std::span<const NodeId> xs, NodeId h0, const GruNodes& p,
                             bool reverse = false);

/// Bidirectional layer from zero initial states: output t is [fwd_t ; bwd_t].
std::vector<NodeId> bigru_layer(Graph& g, std::span<const NodeId> xs, const GruNodes& fwd,
                                const GruNodes& bwd);

}  // namespace clampcap::grad
