// Times the serial reference GEMMs against the OpenMP versions.
//
//   bench_kernels [--jobs N] [--reps R]

#include <chrono>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "clampcap/kernels.hpp"

namespace k = clampcap::kernels;

namespace {

using Gemm = void (*)(std::span<const double>, std::span<const double>, std::span<double>, std::size_t,
                      std::size_t, std::size_t, k::Accumulate);

double best_ms(Gemm f, const std::vector<double>& a, const std::vector<double>& b, std::vector<double>& c,
               std::size_t m, std::size_t kk, std::size_t n, int reps) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f(a, b, c, m, kk, n, k::Accumulate::No);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    best = std::min(best, ms);
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GEMM kernel timings"};
  int jobs = 0;
  int reps = 5;
  app.add_option("--jobs", jobs, "OpenMP threads (0: runtime default)");
  app.add_option("--reps", reps, "repetitions; the fastest is reported")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);
  k::set_jobs(jobs);

  struct Shape {
    const char* what;
    std::size_t m, k, n;
  };
  // Batch x input x gate widths seen in the desk and full-size models.
  const Shape shapes[] = {{"desk input", 32, 16, 72},
                          {"desk recurrent", 32, 24, 72},
                          {"full input", 32, 64, 1536},
                          {"full recurrent", 32, 512, 1536},
                          {"full layer 2", 32, 1024, 1536}};
  struct Variant {
    const char* name;
    Gemm serial, parallel;
  };
  const Variant variants[] = {{"nn", k::serial::gemm_nn, k::gemm_nn},
                              {"nt", k::serial::gemm_nt, k::gemm_nt},
                              {"tn", k::serial::gemm_tn, k::gemm_tn}};

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::printf("threads %d\n%-16s %-3s %6s %6s %6s %12s %12s %8s\n", k::jobs(), "shape", "op", "m", "k", "n",
              "serial ms", "omp ms", "speedup");
  for (const auto& s : shapes) {
    std::vector<double> a(s.m * s.k), b(s.k * s.n), c(s.m * s.n);
    for (double& x : a) x = d(rng);
    for (double& x : b) x = d(rng);
    for (const auto& v : variants) {
      // nt takes B as (n x k), tn takes A as (k x m); sizes match either way.
      const double ts = best_ms(v.serial, a, b, c, s.m, s.k, s.n, reps);
      const double tp = best_ms(v.parallel, a, b, c, s.m, s.k, s.n, reps);
      std::printf("%-16s %-3s %6zu %6zu %6zu %12.3f %12.3f %8.2f\n", s.what, v.name, s.m, s.k, s.n, ts, tp, ts / tp);
    }
  }
  return 0;
}
