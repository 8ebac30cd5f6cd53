#include "clampcap/grad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "clampcap/error.hpp"
#include "clampcap/kernels.hpp"

namespace clampcap::grad {

namespace {

using kernels::Accumulate;

void require(bool ok, const char* op, const std::string& detail) {
  if (!ok) fail(ErrorKind::ShapeMismatch, std::string(op) + ": " + detail);
}

std::string shapes(const Tensor& a, const Tensor& b) {
  return a.shape_string() + " vs " + b.shape_string();
}

Tensor matrix_like(const Tensor& t) { return Tensor(t.rows(), t.cols()); }

void add_bias_rows(Tensor& y, const Tensor& bias) {
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    for (std::size_t c = 0; c < y.cols(); ++c) row[c] += bias[c];
  }
}

void accumulate_bias_grad(Graph& g, NodeId bias, const Tensor& dy) {
  if (!g.requires_grad(bias)) return;
  Tensor& db = g.grad_buffer(bias);
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    auto row = dy.row(r);
    for (std::size_t c = 0; c < dy.cols(); ++c) db[c] += row[c];
  }
}

template <typename F, typename D>
NodeId unary(Graph& g, NodeId a, F forward, D derivative_from_output) {
  const Tensor& x = g.value(a);
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = forward(x[i]);
  return g.add(std::move(y), {a}, [a, derivative_from_output](Graph& g, NodeId self) {
    if (!g.requires_grad(a)) return;
    const Tensor& y = g.value(self);
    const Tensor& dy = g.grad_buffer(self);
    Tensor& dx = g.grad_buffer(a);
    for (std::size_t i = 0; i < y.size(); ++i) dx[i] += dy[i] * derivative_from_output(y[i]);
  });
}

}  // namespace

NodeId matmul(Graph& g, NodeId x, NodeId w) {
  const Tensor& xv = g.value(x);
  const Tensor& wv = g.value(w);
  const std::size_t m = xv.rows(), k = xv.cols(), n = wv.cols();
  require(wv.rows() == k, "matmul", shapes(xv, wv));
  Tensor y(m, n);
  kernels::gemm_nn(xv.values(), wv.values(), y.values(), m, k, n);
  return g.add(std::move(y), {x, w}, [x, w, m, k, n](Graph& g, NodeId self) {
    const Tensor& dy = g.grad_buffer(self);
    if (g.requires_grad(x)) {
      kernels::gemm_nt(dy.values(), g.value(w).values(), g.grad_buffer(x).values(), m, n, k,
                       Accumulate::Yes);
    }
    if (g.requires_grad(w)) {
      kernels::gemm_tn(g.value(x).values(), dy.values(), g.grad_buffer(w).values(), k, m, n,
                       Accumulate::Yes);
    }
  });
}

NodeId affine(Graph& g, NodeId x, NodeId w, NodeId b) {
  const Tensor& xv = g.value(x);
  const Tensor& wv = g.value(w);
  const Tensor& bv = g.value(b);
  const std::size_t m = xv.rows(), k = xv.cols(), n = wv.cols();
  require(wv.rows() == k, "affine", shapes(xv, wv));
  require(bv.size() == n, "affine", "bias " + bv.shape_string() + " for width " + std::to_string(n));
  Tensor y(m, n);
  kernels::gemm_nn(xv.values(), wv.values(), y.values(), m, k, n);
  add_bias_rows(y, bv);
  return g.add(std::move(y), {x, w, b}, [x, w, b, m, k, n](Graph& g, NodeId self) {
    const Tensor& dy = g.grad_buffer(self);
    if (g.requires_grad(x)) {
      kernels::gemm_nt(dy.values(), g.value(w).values(), g.grad_buffer(x).values(), m, n, k,
                       Accumulate::Yes);
    }
    if (g.requires_grad(w)) {
      kernels::gemm_tn(g.value(x).values(), dy.values(), g.grad_buffer(w).values(), k, m, n,
                       Accumulate::Yes);
    }
    accumulate_bias_grad(g, b, dy);
  });
}

namespace {

NodeId linear_nt_impl(Graph& g, NodeId x, NodeId w, const NodeId* b) {
  const Tensor& xv = g.value(x);
  const Tensor& wv = g.value(w);
  const std::size_t m = xv.rows(), k = xv.cols(), n = wv.rows();
  require(wv.cols() == k, "linear_nt", shapes(xv, wv));
  Tensor y(m, n);
  kernels::gemm_nt(xv.values(), wv.values(), y.values(), m, k, n);
  std::vector<NodeId> parents{x, w};
  NodeId bias = 0;
  const bool has_bias = b != nullptr;
  if (has_bias) {
    bias = *b;
    const Tensor& bv = g.value(bias);
    require(bv.size() == n, "linear_nt", "bias " + bv.shape_string() + " for width " + std::to_string(n));
    add_bias_rows(y, bv);
    parents.push_back(bias);
  }
  return g.add(std::move(y), std::move(parents),
               [x, w, bias, has_bias, m, k, n](Graph& g, NodeId self) {
                 const Tensor& dy = g.grad_buffer(self);
                 if (g.requires_grad(x)) {
                   kernels::gemm_nn(dy.values(), g.value(w).values(), g.grad_buffer(x).values(),
                                    m, n, k, Accumulate::Yes);
                 }
                 if (g.requires_grad(w)) {
                   kernels::gemm_tn(dy.values(), g.value(x).values(), g.grad_buffer(w).values(),
                                    n, m, k, Accumulate::Yes);
                 }
                 if (has_bias) accumulate_bias_grad(g, bias, dy);
               });
}

}  // namespace

NodeId linear_nt(Graph& g, NodeId x, NodeId w) { return linear_nt_impl(g, x, w, nullptr); }

NodeId linear_nt(Graph& g, NodeId x, NodeId w, NodeId b) { return linear_nt_impl(g, x, w, &b); }

NodeId add(Graph& g, NodeId a, NodeId b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  require(av.same_shape(bv), "add", shapes(av, bv));
  Tensor y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  return g.add(std::move(y), {a, b}, [a, b](Graph& g, NodeId self) {
    const Tensor& dy = g.grad_buffer(self);
    for (NodeId p : {a, b}) {
      if (!g.requires_grad(p)) continue;
      Tensor& dp = g.grad_buffer(p);
      for (std::size_t i = 0; i < dy.size(); ++i) dp[i] += dy[i];
    }
  });
}

NodeId sub(Graph& g, NodeId a, NodeId b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  require(av.same_shape(bv), "sub", shapes(av, bv));
  Tensor y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  return g.add(std::move(y), {a, b}, [a, b](Graph& g, NodeId self) {
    const Tensor& dy = g.grad_buffer(self);
    if (g.requires_grad(a)) {
      Tensor& da = g.grad_buffer(a);
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
    }
    if (g.requires_grad(b)) {
      Tensor& db = g.grad_buffer(b);
      for (std::size_t i = 0; i < dy.size(); ++i) db[i] -= dy[i];
    }
  });
}

NodeId mul(Graph& g, NodeId a, NodeId b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  require(av.same_shape(bv), "mul", shapes(av, bv));
  Tensor y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  return g.add(std::move(y), {a, b}, [a, b](Graph& g, NodeId self) {
    const Tensor& dy = g.grad_buffer(self);
    if (g.requires_grad(a)) {
      const Tensor& bv = g.value(b);
      Tensor& da = g.grad_buffer(a);
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * bv[i];
    }
    if (g.requires_grad(b)) {
      const Tensor& av = g.value(a);
      Tensor& db = g.grad_buffer(b);
      for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * av[i];
    }
  });
}

NodeId scale(Graph& g, NodeId a, double c) {
  Tensor y = g.value(a);
  for (double& v : y.values()) v *= c;
  return g.add(std::move(y), {a}, [a, c](Graph& g, NodeId self) {
    const Tensor& dy = g.grad_buffer(self);
    Tensor& da = g.grad_buffer(a);
    for (std::size_t i = 0; i < dy.size(); ++i) da[i] += c * dy[i];
  });
}

NodeId one_minus(Graph& g, NodeId a) {
  Tensor y = g.value(a);
  for (double& v : y.values()) v = 1.0 - v;
  return g.add(std::move(y), {a}, [a](Graph& g, NodeId self) {
    const Tensor& dy = g.grad_buffer(self);
    Tensor& da = g.grad_buffer(a);
    for (std::size_t i = 0; i < dy.size(); ++i) da[i] -= dy[i];
  });
}

NodeId sum(Graph& g, NodeId a) {
  double total = 0.0;
  for (double v : g.value(a).values()) total += v;
  return g.add(Tensor(1, 1, total), {a}, [a](Graph& g, NodeId self) {
    const double dy = g.grad_buffer(self)[0];
    for (double& v : g.grad_buffer(a).values()) v += dy;
  });
}

NodeId sigmoid(Graph& g, NodeId a) {
  return unary(
      g, a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double y) { return y * (1.0 - y); });
}

NodeId tanh(Graph& g, NodeId a) {
  return unary(
      g, a, [](double x) { return std::tanh(x); }, [](double y) { return 1.0 - y * y; });
}

NodeId softmax_rows(Graph& g, NodeId a) {
  const Tensor& x = g.value(a);
  Tensor y = matrix_like(x);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto out = y.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) z += (out[c] = std::exp(in[c] - mx));
    for (double& v : out) v /= z;
  }
  return g.add(std::move(y), {a}, [a](Graph& g, NodeId self) {
    const Tensor& y = g.value(self);
    const Tensor& dy = g.grad_buffer(self);
    Tensor& dx = g.grad_buffer(a);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      auto yr = y.row(r);
      auto gr = dy.row(r);
      double dot = 0.0;
      for (std::size_t c = 0; c < yr.size(); ++c) dot += yr[c] * gr[c];
      auto dr = dx.row(r);
      for (std::size_t c = 0; c < yr.size(); ++c) dr[c] += yr[c] * (gr[c] - dot);
    }
  });
}

NodeId concat_cols(Graph& g, NodeId a, NodeId b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  require(av.rows() == bv.rows(), "concat_cols", shapes(av, bv));
  const std::size_t ca = av.cols(), cb = bv.cols();
  Tensor y(av.rows(), ca + cb);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    std::copy(av.row(r).begin(), av.row(r).end(), y.row(r).begin());
    std::copy(bv.row(r).begin(), bv.row(r).end(), y.row(r).begin() + static_cast<std::ptrdiff_t>(ca));
  }
  return g.add(std::move(y), {a, b}, [a, b, ca, cb](Graph& g, NodeId self) {
    const Tensor& dy = g.grad_buffer(self);
    if (g.requires_grad(a)) {
      Tensor& da = g.grad_buffer(a);
      for (std::size_t r = 0; r < dy.rows(); ++r)
        for (std::size_t c = 0; c < ca; ++c) da.at(r, c) += dy.at(r, c);
    }
    if (g.requires_grad(b)) {
      Tensor& db = g.grad_buffer(b);
      for (std::size_t r = 0; r < dy.rows(); ++r)
        for (std::size_t c = 0; c < cb; ++c) db.at(r, c) += dy.at(r, ca + c);
    }
  });
}

NodeId gather_rows(Graph& g, std::span<const NodeId> steps, std::span<const std::size_t> pick) {
  require(!steps.empty(), "gather_rows", "no steps");
  const Tensor& first = g.value(steps.front());
  require(pick.size() == first.rows(), "gather_rows",
          std::to_string(pick.size()) + " picks for " + std::to_string(first.rows()) + " rows");
  Tensor y(first.rows(), first.cols());
  std::vector<NodeId> parents(steps.begin(), steps.end());
  for (std::size_t r = 0; r < pick.size(); ++r) {
    require(pick[r] < steps.size(), "gather_rows", "pick out of range");
    const Tensor& src = g.value(steps[pick[r]]);
    require(src.same_shape(first), "gather_rows", shapes(src, first));
    std::copy(src.row(r).begin(), src.row(r).end(), y.row(r).begin());
  }
  std::vector<std::size_t> picks(pick.begin(), pick.end());
  return g.add(std::move(y), parents, [parents, picks](Graph& g, NodeId self) {
    const Tensor& dy = g.grad_buffer(self);
    for (std::size_t r = 0; r < picks.size(); ++r) {
      const NodeId src = parents[picks[r]];
      if (!g.requires_grad(src)) continue;
      auto out = g.grad_buffer(src).row(r);
      auto in = dy.row(r);
      for (std::size_t c = 0; c < in.size(); ++c) out[c] += in[c];
    }
  });
}

NodeId temporal_max_pool(Graph& g, NodeId seq) {
  const Tensor& x = g.value(seq);
  require(x.rows() >= 1, "temporal_max_pool", "empty sequence");
  const std::size_t cols = x.cols();
  Tensor y(1, cols);
  std::vector<std::size_t> arg(cols, 0);
  for (std::size_t c = 0; c < cols; ++c) {
    y[c] = x.at(0, c);
    for (std::size_t t = 1; t < x.rows(); ++t) {
      if (x.at(t, c) > y[c]) {
        y[c] = x.at(t, c);
        arg[c] = t;
      }
    }
  }
  return g.add(std::move(y), {seq}, [seq, arg](Graph& g, NodeId self) {
    const Tensor& dy = g.grad_buffer(self);
    Tensor& dx = g.grad_buffer(seq);
    for (std::size_t c = 0; c < arg.size(); ++c) dx.at(arg[c], c) += dy[c];
  });
}

NodeId temporal_max_pool(Graph& g, std::span<const NodeId> steps,
                         std::span<const std::size_t> valid) {
  require(!steps.empty(), "temporal_max_pool", "no steps");
  const Tensor& first = g.value(steps.front());
  const std::size_t rows = first.rows(), cols = first.cols();
  require(valid.size() == rows, "temporal_max_pool", "valid length per row required");
  Tensor y(rows, cols);
  std::vector<std::size_t> arg(rows * cols, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    require(valid[r] >= 1 && valid[r] <= steps.size(), "temporal_max_pool", "valid length out of range");
    for (std::size_t c = 0; c < cols; ++c) {
      double best = first.at(r, c);
      for (std::size_t t = 1; t < valid[r]; ++t) {
        const double v = g.value(steps[t]).at(r, c);
        if (v > best) {
          best = v;
          arg[r * cols + c] = t;
        }
      }
      y.at(r, c) = best;
    }
  }
  std::vector<NodeId> parents(steps.begin(), steps.end());
  return g.add(std::move(y), parents, [parents, arg, cols](Graph& g, NodeId self) {
    const Tensor& dy = g.grad_buffer(self);
    for (std::size_t i = 0; i < arg.size(); ++i) {
      const NodeId src = parents[arg[i]];
      if (!g.requires_grad(src)) continue;
      g.grad_buffer(src).at(i / cols, i % cols) += dy[i];
    }
  });
}

NodeId dropout(Graph& g, NodeId a, double p, Mode mode, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) fail(ErrorKind::InvalidConfig, "dropout probability must lie in [0, 1)");
  if (mode == Mode::Eval || p == 0.0) return a;
  const Tensor& x = g.value(a);
  Tensor mask(x.shape());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - p);
  for (double& m : mask.values()) m = unit(rng) < p ? 0.0 : keep_scale;
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= mask[i];
  return g.add(std::move(y), {a}, [a, mask = std::move(mask)](Graph& g, NodeId self) {
    const Tensor& dy = g.grad_buffer(self);
    Tensor& dx = g.grad_buffer(a);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * mask[i];
  });
}

NodeId weighted_nll_loss(Graph& g, std::span<const NodeId> probs,
                         const std::vector<std::vector<std::size_t>>& targets,
                         std::span<const double> class_weights) {
  require(!probs.empty(), "weighted_nll_loss", "no steps");
  const Tensor& first = g.value(probs.front());
  const std::size_t batch = first.rows(), classes = first.cols(), steps = probs.size();
  require(targets.size() == batch, "weighted_nll_loss", "target rows differ from batch size");
  require(class_weights.size() == classes, "weighted_nll_loss",
          std::to_string(class_weights.size()) + " weights for " + std::to_string(classes) + " classes");
  const double norm = 1.0 / static_cast<double>(batch * steps);
  double loss = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    const Tensor& p = g.value(probs[t]);
    require(p.same_shape(first), "weighted_nll_loss", shapes(p, first));
    for (std::size_t b = 0; b < batch; ++b) {
      require(targets[b].size() == steps, "weighted_nll_loss", "target length differs from steps");
      const std::size_t y = targets[b][t];
      require(y < classes, "weighted_nll_loss", "target index out of range");
      loss += class_weights[y] * -std::log(std::max(p.at(b, y), kProbClamp));
    }
  }
  std::vector<NodeId> parents(probs.begin(), probs.end());
  std::vector<double> weights(class_weights.begin(), class_weights.end());
  return g.add(Tensor(1, 1, loss * norm), parents,
               [parents, targets, weights, norm](Graph& g, NodeId self) {
                 const double dy = g.grad_buffer(self)[0];
                 for (std::size_t t = 0; t < parents.size(); ++t) {
                   if (!g.requires_grad(parents[t])) continue;
                   const Tensor& p = g.value(parents[t]);
                   Tensor& dp = g.grad_buffer(parents[t]);
                   for (std::size_t b = 0; b < targets.size(); ++b) {
                     const std::size_t y = targets[b][t];
                     const double pv = p.at(b, y);
                     if (pv > kProbClamp) dp.at(b, y) -= dy * norm * weights[y] / pv;
                   }
                 }
               });
}

NodeId bce_loss(Graph& g, NodeId probs, const Tensor& labels) {
  const Tensor& p = g.value(probs);
  require(p.rows() == labels.rows() && p.cols() == labels.cols(), "bce_loss", shapes(p, labels));
  const double norm = 1.0 / static_cast<double>(p.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p[i], kProbClamp, 1.0 - kProbClamp);
    loss -= labels[i] * std::log(q) + (1.0 - labels[i]) * std::log(1.0 - q);
  }
  return g.add(Tensor(1, 1, loss * norm), {probs}, [probs, labels, norm](Graph& g, NodeId self) {
    const double dy = g.grad_buffer(self)[0];
    const Tensor& p = g.value(probs);
    Tensor& dp = g.grad_buffer(probs);
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i] < kProbClamp || p[i] > 1.0 - kProbClamp) continue;
      const double y = labels[i];
      dp[i] += dy * norm * (-y / p[i] + (1.0 - y) / (1.0 - p[i]));
    }
  });
}

}  // namespace clampcap::grad
