#pragma once

// Dense matrix kernels behind every affine map in the model.
//
// Two implementations share one contract: `serial::` is the plain reference
// used by tests, the unqualified versions split output rows across OpenMP
// threads. Each output element is accumulated in the same order in both, so
// results are bit-identical regardless of thread count.

#include <cstddef>
#include <span>

namespace clampcap::kernels {

enum class Accumulate { No, Yes };

namespace serial {

// C (m x n) = A (m x k) * B (k x n)
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, Accumulate acc = Accumulate::No);
// C (m x n) = A (m x k) * B^T, B stored (n x k)
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, Accumulate acc = Accumulate::No);
// C (m x n) = A^T * B, A stored (k x m), B stored (k x n)
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, Accumulate acc = Accumulate::No);

}  // namespace serial

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, Accumulate acc = Accumulate::No);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, Accumulate acc = Accumulate::No);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, Accumulate acc = Accumulate::No);

/// Sets the OpenMP team size used by the parallel kernels (0 keeps the runtime default).
void set_jobs(int jobs);
int jobs();

}  // namespace clampcap::kernels
