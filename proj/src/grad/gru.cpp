#include "clampcap/grad/gru.hpp"

#include <cmath>

#include "clampcap/error.hpp"

namespace clampcap::grad {

GruCellParams::GruCellParams(std::size_t input, std::size_t hidden)
    : w_z(hidden, input),
      w_r(hidden, input),
      w_n(hidden, input),
      u_z(hidden, hidden),
      u_r(hidden, hidden),
      u_n(hidden, hidden),
      b_z(1, hidden),
      b_r(1, hidden),
      b_in(1, hidden),
      b_hn(1, hidden) {}

void GruCellParams::for_each(const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("W_z", w_z);
  fn("W_r", w_r);
  fn("W_n", w_n);
  fn("U_z", u_z);
  fn("U_r", u_r);
  fn("U_n", u_n);
  fn("b_z", b_z);
  fn("b_r", b_r);
  fn("b_in", b_in);
  fn("b_hn", b_hn);
}

void GruCellParams::for_each(
    const std::function<void(const std::string&, const Tensor&)>& fn) const {
  const_cast<GruCellParams*>(this)->for_each(
      [&](const std::string& name, Tensor& t) { fn(name, t); });
}

void GruCellParams::init_uniform(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_size()));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Tensor* m : {&w_z, &w_r, &w_n, &u_z, &u_r, &u_n}) {
    for (double& v : m->values()) v = dist(rng);
  }
  for (Tensor* b : {&b_z, &b_r, &b_in, &b_hn}) b->fill(0.0);
}

GruNodes bind_gru(Graph& g, const GruCellParams& p, bool requires_grad) {
  const std::size_t h = p.hidden_size();
  if (p.u_z.rows() != h || p.u_z.cols() != h || p.b_z.size() != h || p.w_r.rows() != h ||
      p.w_n.rows() != h || p.w_r.cols() != p.input_size() || p.w_n.cols() != p.input_size()) {
    fail(ErrorKind::ShapeMismatch, "inconsistent GRU parameter shapes");
  }
  GruNodes n;
  n.w_z = g.leaf(p.w_z, requires_grad);
  n.w_r = g.leaf(p.w_r, requires_grad);
  n.w_n = g.leaf(p.w_n, requires_grad);
  n.u_z = g.leaf(p.u_z, requires_grad);
  n.u_r = g.leaf(p.u_r, requires_grad);
  n.u_n = g.leaf(p.u_n, requires_grad);
  n.b_z = g.leaf(p.b_z, requires_grad);
  n.b_r = g.leaf(p.b_r, requires_grad);
  n.b_in = g.leaf(p.b_in, requires_grad);
  n.b_hn = g.leaf(p.b_hn, requires_grad);
  n.hidden = h;
  return n;
}

GruInput gru_project_input(Graph& g, NodeId x, const GruNodes& p) {
  return {linear_nt(g, x, p.w_z, p.b_z), linear_nt(g, x, p.w_r, p.b_r),
          linear_nt(g, x, p.w_n, p.b_in)};
}

NodeId gru_step(Graph& g, const GruInput& in, NodeId h, const GruNodes& p) {
  const NodeId z = sigmoid(g, add(g, in.z, linear_nt(g, h, p.u_z)));
  const NodeId r = sigmoid(g, add(g, in.r, linear_nt(g, h, p.u_r)));
  const NodeId hn = linear_nt(g, h, p.u_n, p.b_hn);
  const NodeId n = tanh(g, add(g, in.n, mul(g, r, hn)));
  return add(g, mul(g, one_minus(g, z), n), mul(g, z, h));
}

NodeId gru_cell(Graph& g, NodeId x, NodeId h, const GruNodes& p) {
  return gru_step(g, gru_project_input(g, x, p), h, p);
}

std::vector<NodeId> gru_scan(Graph& g, std::span<const NodeId> xs, NodeId h0, const GruNodes& p,
                             bool reverse) {
  std::vector<NodeId> out(xs.size());
  NodeId h = h0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const std::size_t t = reverse ? xs.size() - 1 - i : i;
    h = gru_cell(g, xs[t], h, p);
    out[t] = h;
  }
  return out;
}

std::vector<NodeId> bigru_layer(Graph& g, std::span<const NodeId> xs, const GruNodes& fwd,
                                const GruNodes& bwd) {
  if (xs.empty()) fail(ErrorKind::ShapeMismatch, "bigru_layer needs at least one step");
  const std::size_t batch = g.value(xs.front()).rows();
  const NodeId h0f = g.leaf(Tensor(batch, fwd.hidden));
  const NodeId h0b = g.leaf(Tensor(batch, bwd.hidden));
  const auto f = gru_scan(g, xs, h0f, fwd, false);
  const auto b = gru_scan(g, xs, h0b, bwd, true);
  std::vector<NodeId> out(xs.size());
  for (std::size_t t = 0; t < xs.size(); ++t) out[t] = concat_cols(g, f[t], b[t]);
  return out;
}

}  // namespace clampcap::grad
