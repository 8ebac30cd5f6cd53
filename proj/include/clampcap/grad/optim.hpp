#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "clampcap/tensor.hpp"

namespace clampcap::grad {

/// Global L2 norm over all gradient tensors.
double global_norm(std::span<const Tensor> grads);

/// Rescales every gradient by max_norm / g when the global norm g exceeds
/// max_norm. Returns the norm before clipping.
double clip_grad_norm(std::span<Tensor> grads, double max_norm = 1.0);

struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::int64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

inline constexpr double kDefaultLearningRate = 1e-4;

/// Bias-corrected Adam update in place. Moments are allocated on the first
/// call to mirror the parameter shapes.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               double lr = kDefaultLearningRate);

}  // namespace clampcap::grad
