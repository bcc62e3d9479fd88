#include <gtest/gtest.h>

#include <cmath>

#include "causalflow/diff.hpp"
#include "causalflow/gaussian.hpp"
#include "causalflow/incr_mlp.hpp"
#include "causalflow/rng.hpp"
#include "oracles.hpp"

using namespace causalflow;
using ad::Tape;
using ad::Var;

TEST(Primitives, LeakySegmentsValuesAndSlopes) {
  Tape t;
  Var x0 = t.leaf(0.0);
  Var y0 = t.leaky_segments(x0, 0.3);
  EXPECT_DOUBLE_EQ(y0.value(), 0.0);
  EXPECT_DOUBLE_EQ(t.gradient(y0)[0], 1.0);
  Tape u;
  Var x2 = u.leaf(2.0);
  Var y2 = u.leaky_segments(x2, 0.5);
  EXPECT_DOUBLE_EQ(y2.value(), 1.25);
  EXPECT_DOUBLE_EQ(u.gradient(y2)[0], 0.25);
  // Continuity at the kinks and odd symmetry.
  for (double a : {0.1, 0.3, 0.9}) {
    EXPECT_NEAR(ad::leaky_segments_value(1.0, a), 1.0, 1e-15);
    EXPECT_NEAR(ad::leaky_segments_value(std::nextafter(-1.0, -2.0), a), -1.0, 1e-12);
    EXPECT_DOUBLE_EQ(ad::leaky_segments_value(-3.7, a), -ad::leaky_segments_value(3.7, a));
  }
}

TEST(Primitives, ElementaryGradients) {
  Tape t;
  Var x = t.leaf(2.0);
  EXPECT_DOUBLE_EQ(t.gradient(t.log(x))[0], 0.5);
  Tape s;
  Var z = s.leaf(1.3);
  EXPECT_NEAR(s.gradient(s.gauss_logpdf(z))[0], -1.3, 1e-15);
  Tape q;
  Var p = q.leaf(0.3);
  EXPECT_NEAR(q.gradient(q.gauss_quantile(p))[0], 1.0 / normal_pdf(normal_quantile(0.3)), 1e-9);
  Tape d;
  std::vector<double> wv{1.0, -2.0, 0.5}, xv{3.0, 0.25, -4.0};
  auto w = d.leaves(wv);
  auto xs = d.leaves(xv);
  auto g = d.gradient(d.dot(w, xs));
  for (int i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(g[i], xv[i]);
    EXPECT_DOUBLE_EQ(g[3 + i], wv[i]);
  }
  Tape a;
  Var m = a.leaf(-0.4);
  Var f = a.abs_floor(m, 1e-6);
  EXPECT_DOUBLE_EQ(f.value(), 0.4 + 1e-6);
  EXPECT_DOUBLE_EQ(a.gradient(f)[0], -1.0);
}

TEST(Primitives, DomainErrorsCarryNodeId) {
  Tape t;
  Var x = t.leaf(-1.0);
  try {
    t.log(x);
    FAIL() << "log of a negative value";
  } catch (const EvaluationError& e) {
    EXPECT_EQ(e.where(), t.size());
  }
  Tape u;
  Var zero = u.leaf(0.0);
  EXPECT_THROW(u.div(u.leaf(1.0), zero), EvaluationError);
  EXPECT_THROW(u.gauss_quantile(u.leaf(1.0)), EvaluationError);
}

TEST(Gradient, NonScalarOutputRejected) {
  Tape t;
  std::vector<double> v{1.0, 2.0};
  auto r = t.leaves(v);
  auto th = t.tanh(r);
  EXPECT_THROW(t.gradient(th), InvalidArgument);
  EXPECT_NO_THROW(t.gradient(th.slice(0, 1)));
}

namespace {

// Random smooth expression over `x`; every op keeps values moderate.
Var random_graph(Tape& t, std::span<const Var> leaves, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Var> pool(leaves.begin(), leaves.end());
  for (int step = 0; step < 24; ++step) {
    Var a = pool[rng.below(pool.size())];
    Var b = pool[rng.below(pool.size())];
    Var out;
    switch (rng.below(10)) {
      case 0: out = a + b; break;
      case 1: out = a - b; break;
      case 2: out = t.tanh(ad::VarRange{&t, (a * b).id, 1})[0]; break;
      case 3: out = t.div(a, t.add(t.mul(b, b), 1.0)); break;
      case 4: out = t.log(t.add(t.mul(a, a), 0.5)); break;
      case 5: out = t.exp(t.tanh(ad::VarRange{&t, a.id, 1})[0]); break;
      case 6: out = t.gauss_logpdf(a); break;
      case 7: out = t.gauss_quantile(t.gauss_cdf(t.mul(a, 0.5))); break;
      case 8: out = t.neg(a) * 0.7; break;
      default: {
        std::vector<Var> two{a, b};
        out = t.sum(std::span<const Var>(two));
      }
    }
    pool.push_back(out);
  }
  std::vector<Var> tail(pool.end() - 6, pool.end());
  return t.sum(std::span<const Var>(tail));
}

}  // namespace

TEST(Gradient, MatchesFiniteDifferencesOnRandomGraphs) {
  Rng rng(17);
  for (int graph = 0; graph < 100; ++graph) {
    for (int point = 0; point < 10; ++point) {
      std::vector<double> x(5);
      for (auto& v : x) v = rng.uniform(-1.5, 1.5);
      auto f = [&](std::span<const double> p) {
        Tape t;
        auto lv = t.leaves(p).vars();
        return random_graph(t, lv, static_cast<std::uint64_t>(graph)).value();
      };
      Tape t;
      auto lv = t.leaves(x).vars();
      auto out = random_graph(t, lv, static_cast<std::uint64_t>(graph));
      auto g = t.gradient(out);
      auto fd = oracle::central_gradient(f, x, 1e-5);
      for (std::size_t j = 0; j < x.size(); ++j)
        ASSERT_NEAR(g[j], fd[j], 1e-4 * std::max(1.0, std::abs(fd[j])))
            << "graph " << graph << " coord " << j;
    }
  }
}

TEST(Gradient, LinearAndDeterministic) {
  std::vector<double> x{0.3, -0.8, 1.1, 0.05, 0.6};
  Tape a;
  auto la = a.leaves(x).vars();
  Var f = random_graph(a, la, 1);
  Var g = random_graph(a, la, 2);
  auto sum = a.gradient(f + g);
  auto gf = a.gradient(f);
  auto gg = a.gradient(g);
  for (std::size_t j = 0; j < x.size(); ++j) EXPECT_NEAR(sum[j], gf[j] + gg[j], 1e-13);
  Tape b;
  auto lb = b.leaves(x).vars();
  Var f2 = random_graph(b, lb, 1);
  EXPECT_EQ(b.gradient(f2), gf);
}

TEST(Gradient, AffineAndTanhBlocksMatchScalarOps) {
  Rng rng(2);
  std::vector<double> w(6), x(3), bias(2);
  for (auto* v : {&w, &x, &bias})
    for (auto& e : *v) e = rng.uniform(-1, 1);
  Tape t;
  auto wr = t.leaves(w);
  auto xr = t.leaves(x);
  auto br = t.leaves(bias);
  auto h = t.tanh(t.affine(wr, xr, br));
  Var out = t.sum(h);
  auto g = t.gradient(out);
  std::vector<double> all(w);
  all.insert(all.end(), x.begin(), x.end());
  all.insert(all.end(), bias.begin(), bias.end());
  auto f = [](std::span<const double> p) {
    double s = 0.0;
    for (int r = 0; r < 2; ++r) {
      double a = p[9 + r];
      for (int c = 0; c < 3; ++c) a += p[r * 3 + c] * p[6 + c];
      s += std::tanh(a);
    }
    return s;
  };
  auto fd = oracle::central_gradient(f, all, 1e-6);
  for (std::size_t j = 0; j < all.size(); ++j) EXPECT_NEAR(g[j], fd[j], 1e-8);
}

TEST(Tape, RewindDropsLaterNodes) {
  Tape t;
  Var x = t.leaf(1.0);
  auto mark = t.size();
  t.exp(x);
  t.rewind(mark);
  EXPECT_EQ(t.size(), mark);
  Var y = t.mul(x, 3.0);
  EXPECT_DOUBLE_EQ(t.gradient(y)[0], 3.0);
}

TEST(ParamVector, LayoutTilesExactly) {
  ad::ParamVector p;
  EXPECT_EQ(p.add("a", 3), 0u);
  EXPECT_EQ(p.add("b", 2), 3u);
  EXPECT_EQ(p.size(), 5u);
  EXPECT_EQ(p.find("b").offset, 3u);
  EXPECT_NO_THROW(p.validate_layout());
  EXPECT_THROW(p.find("c"), InvalidArgument);
  EXPECT_THROW(p.add("a", 1), InvalidArgument);
}

namespace {

// g(x) = 4 rho(x / 2) + 1 = 2x + 1 on [-2, 2].
std::vector<double> affine_theta() { return {0.5, 0.0, 4.0, 1.0}; }

auto g_tape(double alpha) {
  return [alpha](Tape& t, Var x, std::span<const Var> th) { return g_forward_tape(t, x, th, alpha); };
}

}  // namespace

TEST(ImplicitInverse, AffineCaseByHand) {
  auto th = affine_theta();
  auto p = IncrMlpParams::unflatten(th, 0.3);
  double x = g_inverse(3.0, p);
  EXPECT_NEAR(x, 1.0, 1e-14);
  auto inv = ad::implicit_inverse_grad(g_tape(0.3), th, x);
  EXPECT_NEAR(inv.dx_dy, 0.5, 1e-14);
  EXPECT_NEAR(inv.dx_dtheta[3], -0.5, 1e-14);
}

TEST(ImplicitInverse, MatchesFiniteDifferencesOfExactInverse) {
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(6);
    std::vector<double> th(3 * n + 1);
    for (std::size_t i = 0; i < n; ++i) {
      th[i] = rng.uniform(0.2, 2.0);
      th[n + i] = rng.uniform(-2.0, 2.0);
      th[2 * n + i] = rng.uniform(0.2, 2.0);
    }
    th[3 * n] = rng.uniform(-1.0, 1.0);
    auto p = IncrMlpParams::unflatten(th, 0.3);
    double y = g_forward(rng.uniform(-3.0, 3.0), p);
    double x = g_inverse(y, p);
    // Skip points near a kink, where the inverse is not differentiable.
    bool near_kink = false;
    for (double b : g_breakpoints(p)) near_kink |= std::abs(b - x) < 1e-3;
    if (near_kink) continue;
    auto inv = ad::implicit_inverse_grad(g_tape(0.3), th, x);
    auto f = [&](std::span<const double> q) { return g_inverse(y, IncrMlpParams::unflatten(q, 0.3)); };
    auto fd = oracle::central_gradient(f, th, 1e-7);
    for (std::size_t j = 0; j < th.size(); ++j)
      ASSERT_NEAR(inv.dx_dtheta[j], fd[j], 1e-5 * std::max(1.0, std::abs(fd[j])));
    // The generic implicit node and the analytic inverse node agree.
    Tape ta;
    auto tv = ta.leaves(th).vars();
    Var yv = ta.leaf(y);
    Var xa = g_inverse_tape(ta, yv, tv, 0.3);
    auto ga = ta.gradient(xa);
    Tape tb;
    auto tw = tb.leaves(th).vars();
    Var yw = tb.leaf(y);
    Var xb = ad::implicit_inverse(tb, tw, yw, x, g_tape(0.3));
    auto gb = tb.gradient(xb);
    for (std::size_t j = 0; j < ga.size(); ++j) ASSERT_NEAR(ga[j], gb[j], 1e-10);
    // g(g^{-1}(y; theta); theta) is constant in theta.
    Tape tc;
    auto tu = tc.leaves(th).vars();
    Var yc = tc.leaf(y);
    Var xc = g_inverse_tape(tc, yc, tu, 0.3);
    Var back = g_forward_tape(tc, xc, tu, 0.3);
    auto gc = tc.gradient(back);
    for (std::size_t j = 0; j < th.size(); ++j) ASSERT_NEAR(gc[j], 0.0, 1e-6);
    ASSERT_NEAR(gc[th.size()], 1.0, 1e-9);
  }
}
