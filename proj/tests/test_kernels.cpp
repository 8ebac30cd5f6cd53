#include <doctest.h>

#include <vector>

#include "clampcap/kernels.hpp"
#include "support.hpp"

namespace k = clampcap::kernels;

namespace {

struct Shape {
  std::size_t m, kk, n;
};

const Shape kShapes[] = {{1, 1, 1}, {3, 5, 2}, {17, 33, 9}, {64, 48, 96}, {200, 7, 3}};

std::vector<double> random_values(std::size_t count, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(count);
  for (double& x : v) x = d(rng);
  return v;
}

// a (m x kk) stored per layout flag, b likewise; plain triple loop.
double oracle(const std::vector<double>& a, const std::vector<double>& b, std::size_t i, std::size_t j,
              const Shape& s, bool a_t, bool b_t) {
  double acc = 0.0;
  for (std::size_t p = 0; p < s.kk; ++p) {
    const double av = a_t ? a[p * s.m + i] : a[i * s.kk + p];
    const double bv = b_t ? b[j * s.kk + p] : b[p * s.n + j];
    acc += av * bv;
  }
  return acc;
}

using Gemm = void (*)(std::span<const double>, std::span<const double>, std::span<double>, std::size_t,
                      std::size_t, std::size_t, k::Accumulate);

void check_pair(Gemm serial, Gemm parallel, bool a_t, bool b_t) {
  std::mt19937_64 rng(12);
  for (const Shape& s : kShapes) {
    const auto a = random_values(s.m * s.kk, rng);
    const auto b = random_values(s.kk * s.n, rng);
    const auto base = random_values(s.m * s.n, rng);
    for (auto acc : {k::Accumulate::No, k::Accumulate::Yes}) {
      std::vector<double> c1 = base, c2 = base;
      serial(a, b, c1, s.m, s.kk, s.n, acc);
      for (int jobs : {1, 2, 4}) {
        k::set_jobs(jobs);
        c2 = base;
        parallel(a, b, c2, s.m, s.kk, s.n, acc);
        CHECK(c1 == c2);
      }
      for (std::size_t i = 0; i < s.m; ++i)
        for (std::size_t j = 0; j < s.n; ++j) {
          const double want = oracle(a, b, i, j, s, a_t, b_t) + (acc == k::Accumulate::Yes ? base[i * s.n + j] : 0.0);
          CHECK(c1[i * s.n + j] == doctest::Approx(want).epsilon(1e-12));
        }
    }
  }
  k::set_jobs(0);
}

}  // namespace

TEST_CASE("gemm_nn: serial reference, oracle and parallel agree") {
  check_pair(&k::serial::gemm_nn, &k::gemm_nn, false, false);
}

TEST_CASE("gemm_nt: serial reference, oracle and parallel agree") {
  check_pair(&k::serial::gemm_nt, &k::gemm_nt, false, true);
}

TEST_CASE("gemm_tn: serial reference, oracle and parallel agree") {
  check_pair(&k::serial::gemm_tn, &k::gemm_tn, true, false);
}

TEST_CASE("job count setting") {
  k::set_jobs(3);
  CHECK(k::jobs() == 3);
  k::set_jobs(0);
}
