#include <doctest.h>

#include <cmath>
#include <numeric>

#include "clampcap/error.hpp"
#include "clampcap/grad/gru.hpp"
#include "clampcap/grad/ops.hpp"
#include "clampcap/grad/optim.hpp"
#include "grad_suite.hpp"
#include "support.hpp"

using namespace clampcap;
using namespace clampcap::grad;
using testing::gradcheck;
using testing::random_tensor;

namespace {

constexpr int kSeeds = 20;
constexpr double kTol = 1e-4;

template <typename Make>
void check_seeds(const char* name, Make make) {
  double worst = 0.0;
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(1000 + seed);
    worst = std::max(worst, make(rng));
  }
  INFO(name << " worst relative error " << worst);
  CHECK(worst < kTol);
}

}  // namespace

TEST_CASE("ops, losses and GRU layers pass finite differences") {
  for (const auto& c : testing::op_grad_cases()) check_seeds(c.name.c_str(), c.run);
}

TEST_CASE("GRU cell closed forms") {
  GruCellParams p(3, 2);
  Graph g;
  const auto n = bind_gru(g, p, false);
  const NodeId x = g.leaf(Tensor({1, 3}, std::vector<double>{0.3, -1.0, 2.0}));
  const NodeId h = g.leaf(Tensor({1, 2}, std::vector<double>{0.8, -0.4}));
  const Tensor out = g.value(gru_cell(g, x, h, n));
  CHECK(out[0] == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(out[1] == doctest::Approx(-0.2).epsilon(1e-15));
  const Tensor& zero = g.value(gru_cell(g, x, g.leaf(Tensor(1, 2)), n));
  CHECK(zero[0] == 0.0);
  CHECK(zero[1] == 0.0);
}

TEST_CASE("backward half of a biGRU equals a forward scan of the reversed sequence") {
  std::mt19937_64 rng(5);
  GruCellParams fwd(2, 3), bwd(2, 3);
  Rng init(9);
  fwd.init_uniform(init);
  bwd.init_uniform(init);
  Graph g;
  const auto nf = bind_gru(g, fwd, false);
  const auto nb = bind_gru(g, bwd, false);
  std::vector<NodeId> xs;
  for (int t = 0; t < 4; ++t) xs.push_back(g.leaf(random_tensor(1, 2, rng)));
  const auto out = bigru_layer(g, xs, nf, nb);
  std::vector<NodeId> reversed(xs.rbegin(), xs.rend());
  const auto scan = gru_scan(g, reversed, g.leaf(Tensor(1, 3)), nb);
  for (std::size_t t = 0; t < xs.size(); ++t) {
    const Tensor& o = g.value(out[t]);
    REQUIRE(o.cols() == 6);
    const Tensor& ref = g.value(scan[xs.size() - 1 - t]);
    for (std::size_t k = 0; k < 3; ++k) CHECK(o[3 + k] == ref[k]);
  }
}

TEST_CASE("op semantics") {
  Graph g;
  SUBCASE("x squared at 3 has derivative 6") {
    const NodeId x = g.leaf(Tensor({1, 1}, std::vector<double>{3.0}), true);
    const NodeId y = mul(g, x, x);
    g.backward(y);
    CHECK(g.grad(x)[0] == 6.0);
  }
  SUBCASE("unused parameter gets a zero gradient") {
    const NodeId x = g.leaf(Tensor(1, 2, 1.0), true);
    const NodeId unused = g.leaf(Tensor(2, 2, 1.0), true);
    g.backward(sum(g, x));
    CHECK(testing::l2(g.grad(unused).values()) == 0.0);
  }
  SUBCASE("non-scalar loss is rejected") {
    const NodeId x = g.leaf(Tensor(1, 2, 1.0), true);
    CHECK_THROWS_AS(g.backward(x), Error);
    try {
      g.backward(x);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::NonScalarLoss);
    }
  }
  SUBCASE("a node may not reference a later node") {
    try {
      g.add(Tensor(1, 1), {5}, nullptr);
      FAIL("expected GraphCycle");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::GraphCycle);
    }
  }
  SUBCASE("shape mismatch") {
    const NodeId a = g.leaf(Tensor(2, 3));
    const NodeId b = g.leaf(Tensor(2, 2));
    try {
      add(g, a, b);
      FAIL("expected ShapeMismatch");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::ShapeMismatch);
    }
  }
  SUBCASE("softmax of a zero row is uniform and shift invariant") {
    const NodeId z = g.leaf(Tensor(1, 4));
    for (double v : g.value(softmax_rows(g, z)).values()) CHECK(v == doctest::Approx(0.25));
    std::mt19937_64 rng(3);
    const Tensor x = random_tensor(3, 6, rng, -50, 50);
    Tensor shifted = x;
    for (std::size_t r = 0; r < 3; ++r)
      for (double& v : shifted.row(r)) v += 1000.0 * static_cast<double>(r + 1);
    const Tensor a = g.value(softmax_rows(g, g.leaf(x)));
    const Tensor b = g.value(softmax_rows(g, g.leaf(shifted)));
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 6; ++c) {
        s += a.at(r, c);
        CHECK(a.at(r, c) == doctest::Approx(b.at(r, c)).epsilon(1e-9));
      }
      CHECK(std::abs(s - 1.0) < 1e-9);
    }
  }
  SUBCASE("sigmoid of zero") {
    CHECK(g.value(sigmoid(g, g.leaf(Tensor(1, 1))))[0] == 0.5);
  }
  SUBCASE("affine with identity weights is the identity") {
    std::mt19937_64 rng(1);
    const Tensor x = random_tensor(4, 3, rng);
    Tensor eye(3, 3);
    for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
    CHECK(g.value(affine(g, g.leaf(x), g.leaf(eye), g.leaf(Tensor(1, 3)))) == x);
  }
  SUBCASE("max pool picks column maxima and routes gradient to the earliest maximum") {
    // columns over time [[1,5,3],[2,2,2]] -> [5, 2]
    const NodeId seq = g.leaf(Tensor({3, 2}, std::vector<double>{1, 2, 5, 2, 3, 2}), true);
    const NodeId pooled = temporal_max_pool(g, seq);
    CHECK(g.value(pooled)[0] == 5.0);
    CHECK(g.value(pooled)[1] == 2.0);
    g.backward(sum(g, pooled));
    const Tensor d = g.grad(seq);
    CHECK(d.values()[0] == 0.0);
    CHECK(d.values()[1] == 1.0);
    CHECK(d.values()[2] == 1.0);
    CHECK(d.values()[3] == 0.0);
    CHECK(d.values()[4] == 0.0);
    CHECK(d.values()[5] == 0.0);
  }
  SUBCASE("single-step pool is the identity") {
    const Tensor x({1, 3}, std::vector<double>{0.1, -0.2, 0.3});
    CHECK(g.value(temporal_max_pool(g, g.leaf(x))) == x);
  }
}

TEST_CASE("loss closed forms") {
  Graph g;
  SUBCASE("weighted NLL: w = 2, p = 0.5 gives 2 ln 2") {
    const NodeId p = g.leaf(Tensor({1, 2}, std::vector<double>{0.5, 0.5}));
    const std::vector<NodeId> probs{p};
    const std::vector<double> w{2.0, 1.0};
    const double loss = g.value(weighted_nll_loss(g, probs, {{0}}, w))[0];
    CHECK(loss == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("weighted NLL is zero at certainty and plain NLL with unit weights") {
    const NodeId sure = g.leaf(Tensor({1, 3}, std::vector<double>{0.0, 1.0, 0.0}));
    const std::vector<NodeId> probs{sure};
    const std::vector<double> w{1.0, 1.0, 1.0};
    CHECK(g.value(weighted_nll_loss(g, probs, {{1}}, w))[0] == 0.0);
    const NodeId p = g.leaf(Tensor({1, 3}, std::vector<double>{0.2, 0.3, 0.5}));
    const std::vector<NodeId> ps{p, p};
    const double loss = g.value(weighted_nll_loss(g, ps, {{2, 0}}, w))[0];
    CHECK(loss == doctest::Approx(-(std::log(0.5) + std::log(0.2)) / 2.0).epsilon(1e-12));
  }
  SUBCASE("BCE: y = 1, p = 0.5 gives ln 2; p = y gives ~0") {
    const NodeId p = g.leaf(Tensor({1, 1}, std::vector<double>{0.5}));
    CHECK(g.value(bce_loss(g, p, Tensor({1, 1}, std::vector<double>{1.0})))[0] ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    const Tensor y({1, 3}, std::vector<double>{1, 0, 1});
    CHECK(g.value(bce_loss(g, g.leaf(y), y))[0] < 1e-11);
  }
}

TEST_CASE("dropout") {
  Graph g;
  Rng rng(11);
  std::mt19937_64 data(2);
  const Tensor x = random_tensor(3, 3, data);
  CHECK(g.value(dropout(g, g.leaf(x), 0.0, Mode::Train, rng)) == x);
  CHECK(g.value(dropout(g, g.leaf(x), 0.25, Mode::Eval, rng)) == x);
  CHECK_THROWS_AS(dropout(g, g.leaf(x), 1.0, Mode::Train, rng), Error);

  const Tensor big(1000, 1000, 1.0);
  const Tensor& y = g.value(dropout(g, g.leaf(big), 0.25, Mode::Train, rng));
  const double mean = std::accumulate(y.values().begin(), y.values().end(), 0.0) / static_cast<double>(y.size());
  CHECK(std::abs(mean - 1.0) < 0.01);
  std::size_t zeros = 0;
  for (double v : y.values()) {
    if (v == 0.0) ++zeros;
    else CHECK_FALSE(std::abs(v - 1.0 / 0.75) > 1e-12);
  }
  CHECK(std::abs(static_cast<double>(zeros) / 1e6 - 0.25) < 0.005);
}

TEST_CASE("gradient clipping") {
  std::vector<Tensor> small{Tensor({1, 2}, std::vector<double>{0.3, 0.4})};
  CHECK(clip_grad_norm(small, 1.0) == doctest::Approx(0.5));
  CHECK(small[0][0] == 0.3);

  std::vector<Tensor> g{Tensor({1, 2}, std::vector<double>{3.0, 4.0})};
  CHECK(clip_grad_norm(g, 1.0) == doctest::Approx(5.0));
  CHECK(g[0][0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(g[0][1] == doctest::Approx(0.8).epsilon(1e-15));

  std::vector<Tensor> zero{Tensor(2, 2)};
  clip_grad_norm(zero, 1.0);
  CHECK(global_norm(zero) == 0.0);

  std::mt19937_64 rng(8);
  for (int i = 0; i < 20; ++i) {
    std::vector<Tensor> gs{random_tensor(3, 3, rng, -5, 5), random_tensor(1, 4, rng, -5, 5)};
    const double before = global_norm(gs);
    clip_grad_norm(gs, 1.0);
    CHECK(global_norm(gs) <= std::min(before, 1.0) + 1e-12);
  }
}

TEST_CASE("Adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    Tensor p({1, 2}, std::vector<double>{1.0, -2.0});
    const Tensor before = p;
    AdamState st;
    std::vector<Tensor*> params{&p};
    std::vector<Tensor> grads{Tensor(1, 2)};
    adam_step(params, grads, st);
    CHECK(p == before);
    CHECK(st.step_count == 1);
  }
  SUBCASE("first step moves each parameter by about lr against the gradient") {
    Tensor p({1, 3}, std::vector<double>{0.0, 0.0, 0.0});
    AdamState st;
    std::vector<Tensor*> params{&p};
    std::vector<Tensor> grads{Tensor({1, 3}, std::vector<double>{0.3, -7.0, 1e-3})};
    adam_step(params, grads, st, 1e-4);
    CHECK(p[0] == doctest::Approx(-1e-4).epsilon(1e-4));
    CHECK(p[1] == doctest::Approx(1e-4).epsilon(1e-4));
    CHECK(p[2] == doctest::Approx(-1e-4).epsilon(1e-4));
  }
  SUBCASE("matches a hand-rolled Adam over several steps") {
    Tensor p({1, 1}, std::vector<double>{0.5});
    AdamState st;
    std::vector<Tensor*> params{&p};
    double x = 0.5, m = 0.0, v = 0.0;
    for (int t = 1; t <= 5; ++t) {
      const double grad = 2.0 * x - 0.3 * t;
      std::vector<Tensor> grads{Tensor({1, 1}, std::vector<double>{grad})};
      adam_step(params, grads, st, 0.01);
      m = 0.9 * m + 0.1 * grad;
      v = 0.999 * v + 0.001 * grad * grad;
      const double mh = m / (1.0 - std::pow(0.9, t));
      const double vh = v / (1.0 - std::pow(0.999, t));
      x -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
      CHECK(p[0] == doctest::Approx(x).epsilon(1e-14));
    }
    CHECK(st.step_count == 5);
  }
  SUBCASE("shape mismatch") {
    Tensor p(1, 2);
    AdamState st;
    std::vector<Tensor*> params{&p};
    std::vector<Tensor> grads{Tensor(2, 1)};
    CHECK_THROWS_AS(adam_step(params, grads, st), Error);
  }
}
