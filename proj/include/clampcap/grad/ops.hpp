#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "clampcap/grad/graph.hpp"

namespace clampcap::grad {

using Rng = std::mt19937_64;

enum class Mode { Train, Eval };

// Shapes are rank-2 (rows x cols) unless noted. Every op throws ShapeMismatch
// on inconsistent operands.

NodeId matmul(Graph& g, NodeId x, NodeId w);  // (m x k)(k x n)

/// Row-wise affine map shared over rows: x * w + b, w is (k x n), b is (1 x n).
NodeId affine(Graph& g, NodeId x, NodeId w, NodeId b);

/// x * w^T (+ b): w stored (n x k), the layout of recurrent weight matrices.
NodeId linear_nt(Graph& g, NodeId x, NodeId w);
NodeId linear_nt(Graph& g, NodeId x, NodeId w, NodeId b);

NodeId add(Graph& g, NodeId a, NodeId b);
NodeId sub(Graph& g, NodeId a, NodeId b);
NodeId mul(Graph& g, NodeId a, NodeId b);  // elementwise
NodeId scale(Graph& g, NodeId a, double c);
NodeId one_minus(Graph& g, NodeId a);
NodeId sum(Graph& g, NodeId a);  // -> 1 x 1

NodeId sigmoid(Graph& g, NodeId a);
NodeId tanh(Graph& g, NodeId a);

/// Numerically stable row softmax (max-subtracted).
NodeId softmax_rows(Graph& g, NodeId a);

NodeId concat_cols(Graph& g, NodeId a, NodeId b);

/// Row b of the result is row b of steps[pick[b]]. All steps share a shape.
NodeId gather_rows(Graph& g, std::span<const NodeId> steps, std::span<const std::size_t> pick);

/// Max over the rows (time) of a T x K sequence -> 1 x K. Gradient goes only
/// to the earliest maximizing row of each column.
NodeId temporal_max_pool(Graph& g, NodeId seq);

/// Batched form: steps[t] is B x K; row b pools over t < valid[b].
NodeId temporal_max_pool(Graph& g, std::span<const NodeId> steps,
                         std::span<const std::size_t> valid);

/// Inverted dropout; identity in eval mode or when p == 0.
NodeId dropout(Graph& g, NodeId a, double p, Mode mode, Rng& rng);

inline constexpr double kProbClamp = 1e-12;

/// Mean over B * T' of w(y) * -ln p(y); probs[t] is B x K, targets[b][t].
/// Probabilities are clamped below at 1e-12.
NodeId weighted_nll_loss(Graph& g, std::span<const NodeId> probs,
                         const std::vector<std::vector<std::size_t>>& targets,
                         std::span<const double> class_weights);

/// Mean over all entries of the binary cross-entropy, probs clamped to
/// [1e-12, 1 - 1e-12].
NodeId bce_loss(Graph& g, NodeId probs, const Tensor& labels);

}  // namespace clampcap::grad
