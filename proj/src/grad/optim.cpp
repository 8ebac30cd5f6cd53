#include "clampcap/grad/optim.hpp"

#include <cmath>

#include "clampcap/error.hpp"

namespace clampcap::grad {

double global_norm(std::span<const Tensor> grads) {
  double sq = 0.0;
  for (const Tensor& g : grads) {
    for (double v : g.values()) sq += v * v;
  }
  return std::sqrt(sq);
}

double clip_grad_norm(std::span<Tensor> grads, double max_norm) {
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (Tensor& g : grads) {
      for (double& v : g.values()) v *= factor;
    }
  }
  return norm;
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               double lr) {
  if (params.size() != grads.size()) {
    fail(ErrorKind::ShapeMismatch, std::to_string(params.size()) + " parameters but " +
                                       std::to_string(grads.size()) + " gradients");
  }
  if (state.first_moment.empty()) {
    for (const Tensor* p : params) {
      state.first_moment.emplace_back(p->shape());
      state.second_moment.emplace_back(p->shape());
    }
  }
  if (state.first_moment.size() != params.size()) {
    fail(ErrorKind::ShapeMismatch, "optimizer state was built for a different parameter set");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(grads[i]) || !params[i]->same_shape(state.first_moment[i])) {
      fail(ErrorKind::ShapeMismatch, "parameter " + std::to_string(i) + " shape " +
                                         params[i]->shape_string() + " vs gradient " +
                                         grads[i].shape_string());
    }
  }

  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double correct1 = 1.0 - std::pow(state.beta1, t);
  const double correct2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    Tensor& m = state.first_moment[i];
    Tensor& v = state.second_moment[i];
    const Tensor& g = grads[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double m_hat = m[j] / correct1;
      const double v_hat = v[j] / correct2;
      p[j] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

}  // namespace clampcap::grad
