#include "clampcap/kernels.hpp"

#include <omp.h>

namespace clampcap::kernels {

namespace {

// Below this many multiply-adds the thread team costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

inline void gemm_nn_row(const double* a, const double* b, double* c, std::size_t i,
                        std::size_t k, std::size_t n, Accumulate acc) {
  double* ci = c + i * n;
  if (acc == Accumulate::No) {
    for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
  }
  const double* ai = a + i * k;
  for (std::size_t p = 0; p < k; ++p) {
    const double aip = ai[p];
    const double* bp = b + p * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
  }
}

inline void gemm_nt_row(const double* a, const double* b, double* c, std::size_t i,
                        std::size_t k, std::size_t n, Accumulate acc) {
  const double* ai = a + i * k;
  double* ci = c + i * n;
  for (std::size_t j = 0; j < n; ++j) {
    const double* bj = b + j * k;
    double sum = 0.0;
    for (std::size_t p = 0; p < k; ++p) sum += ai[p] * bj[p];
    ci[j] = acc == Accumulate::Yes ? ci[j] + sum : sum;
  }
}

inline void gemm_tn_row(const double* a, const double* b, double* c, std::size_t i,
                        std::size_t m, std::size_t k, std::size_t n, Accumulate acc) {
  double* ci = c + i * n;
  if (acc == Accumulate::No) {
    for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
  }
  for (std::size_t p = 0; p < k; ++p) {
    const double api = a[p * m + i];
    if (api == 0.0) continue;
    const double* bp = b + p * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
  }
}

}  // namespace

namespace serial {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, Accumulate acc) {
  for (std::size_t i = 0; i < m; ++i) gemm_nn_row(a.data(), b.data(), c.data(), i, k, n, acc);
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, Accumulate acc) {
  for (std::size_t i = 0; i < m; ++i) gemm_nt_row(a.data(), b.data(), c.data(), i, k, n, acc);
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, Accumulate acc) {
  for (std::size_t i = 0; i < m; ++i)
    gemm_tn_row(a.data(), b.data(), c.data(), i, m, k, n, acc);
}

}  // namespace serial

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, Accumulate acc) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelWork)
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    gemm_nn_row(a.data(), b.data(), c.data(), static_cast<std::size_t>(i), k, n, acc);
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, Accumulate acc) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelWork)
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    gemm_nt_row(a.data(), b.data(), c.data(), static_cast<std::size_t>(i), k, n, acc);
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, Accumulate acc) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelWork)
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    gemm_tn_row(a.data(), b.data(), c.data(), static_cast<std::size_t>(i), m, k, n, acc);
}

void set_jobs(int jobs) {
  if (jobs > 0) omp_set_num_threads(jobs);
}

int jobs() { return omp_get_max_threads(); }

}  // namespace clampcap::kernels
