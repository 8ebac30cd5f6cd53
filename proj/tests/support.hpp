#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "clampcap/error.hpp"
#include "clampcap/grad/graph.hpp"
#include "clampcap/grad/ops.hpp"
#include "clampcap/tensor.hpp"

namespace testing {

using clampcap::Tensor;
using clampcap::grad::Graph;
using clampcap::grad::NodeId;

inline Tensor random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t(rows, cols);
  for (double& v : t.values()) v = d(rng);
  return t;
}

inline double l2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// Norm-wise relative error ||a - b|| / max(||a||, ||b||); 0 when both are
/// numerically zero.
inline double relative_error(const Tensor& a, const Tensor& b) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double scale = std::max(l2(a.values()), l2(b.values()));
  if (scale < 1e-12) return 0.0;
  return l2(d) / scale;
}

using Build = std::function<NodeId(Graph&, const std::vector<NodeId>&)>;

/// Builds f over leaves holding `inputs`; non-scalar outputs are reduced with
/// a fixed random projection. Returns the largest per-input relative error
/// between the tape gradient and central differences.
inline double gradcheck(const std::vector<Tensor>& inputs, const Build& f, double eps = 1e-5) {
  Tensor projection;
  auto evaluate = [&](const std::vector<Tensor>& xs, Graph& g) {
    std::vector<NodeId> leaves;
    for (const auto& x : xs) leaves.push_back(g.leaf(x, true));
    NodeId y = f(g, leaves);
    const Tensor& out = g.value(y);
    if (out.size() != 1) {
      if (projection.empty()) {
        std::mt19937_64 rng(out.size() * 7919 + out.rows());
        projection = random_tensor(out.rows(), out.cols(), rng);
      }
      y = clampcap::grad::sum(g, clampcap::grad::mul(g, y, g.leaf(projection)));
    }
    return std::pair{y, leaves};
  };

  Graph g;
  auto [y, leaves] = evaluate(inputs, g);
  g.backward(y);

  double worst = 0.0;
  std::vector<Tensor> xs = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor analytic = g.grad(leaves[i]);
    Tensor numeric(inputs[i].shape());
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      const double keep = xs[i][j];
      xs[i][j] = keep + eps;
      Graph gp;
      const double fp = gp.value(evaluate(xs, gp).first)[0];
      xs[i][j] = keep - eps;
      Graph gm;
      const double fm = gm.value(evaluate(xs, gm).first)[0];
      xs[i][j] = keep;
      numeric[j] = (fp - fm) / (2.0 * eps);
    }
    worst = std::max(worst, relative_error(analytic, numeric));
  }
  return worst;
}

/// Kind of the clampcap::Error thrown by `fn`; fails the test if none is thrown.
template <typename Fn>
std::string thrown_kind(Fn&& fn) {
  try {
    fn();
  } catch (const clampcap::Error& e) {
    return std::string(clampcap::to_string(e.kind()));
  }
  return "none";
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("clampcap_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
