#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "causalflow/error.hpp"
#include "causalflow/flow.hpp"
#include "causalflow/gaussian.hpp"
#include "causalflow/rng.hpp"
#include "oracles.hpp"

using namespace causalflow;

namespace {

FlowConfig small_config() {
  FlowConfig c;
  c.width = 6;
  c.hidden = {8, 8};
  return c;
}

// Initialized model with every parameter jittered, so hypernets matter.
FlowModel random_model(const Dag& dag, std::uint64_t seed, FlowConfig cfg = small_config()) {
  FlowModel m(dag, cfg, seed);
  Rng rng(derive_seed(seed, "jitter"));
  for (double& p : m.params().values()) p += rng.uniform(-0.3, 0.3);
  return m;
}

std::vector<double> normal_vector(Rng& rng, int d) {
  std::vector<double> z(static_cast<std::size_t>(d));
  for (auto& v : z) v = rng.normal();
  return z;
}

}  // namespace

TEST(FlowConfig, Validation) {
  FlowConfig c;
  c.width = 0;
  EXPECT_THROW(FlowModel(Dag::chain(2), c, 1), InvalidArgument);
  c = FlowConfig{};
  c.alpha = 1.0;
  EXPECT_THROW(FlowModel(Dag::chain(2), c, 1), InvalidArgument);
  EXPECT_EQ(base_kind_from_string("gaussian_quantile"), BaseKind::kGaussianQuantile);
  EXPECT_THROW(base_kind_from_string("uniform"), InvalidArgument);
}

TEST(FlowModel, LayoutNamesAndRootBlocks) {
  FlowModel m(Dag(3, {{1, 3}}), small_config(), 1);
  const auto& p = m.params();
  EXPECT_EQ(p.find("node1.theta").size, 19u);
  EXPECT_EQ(p.find("node2.theta").size, 19u);
  EXPECT_EQ(p.find("node3.hyper0.W").size, 8u);
  EXPECT_EQ(p.find("node3.hyper2.b").size, 19u);
  EXPECT_NO_THROW(p.validate_layout());
}

TEST(FlowModel, InitIsNearIdentityOnCentralRange) {
  FlowModel m(Dag::chain(3), FlowConfig{}, 4);
  Rng rng(1);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> z{rng.uniform(-2.5, 2.5), rng.uniform(-2.5, 2.5), rng.uniform(-2.5, 2.5)};
    auto x = m.forward(z);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(x[k], z[k], 0.25);
  }
}

TEST(FlowModel, DeterministicInSeed) {
  EXPECT_TRUE(FlowModel(Dag::chain(3), small_config(), 5) == FlowModel(Dag::chain(3), small_config(), 5));
  EXPECT_FALSE(FlowModel(Dag::chain(3), small_config(), 5) == FlowModel(Dag::chain(3), small_config(), 6));
}

TEST(FlowModel, QuantileBaseIdentityLayerGivesUniform) {
  FlowConfig c;
  c.width = 1;
  c.base = BaseKind::kGaussianQuantile;
  FlowModel m(Dag::empty(1), c, 1);
  auto th = m.params().values();
  th[0] = 1.0 - c.positivity_floor;
  th[1] = 0.0;
  th[2] = 1.0 - c.positivity_floor;
  th[3] = 0.0;
  for (double z : {-2.0, -0.1, 0.7, 1.9}) {
    std::vector<double> zv{z};
    EXPECT_NEAR(m.forward(zv)[0], normal_cdf(z), 1e-12);
  }
  std::vector<double> in{0.3}, out{1.5};
  EXPECT_NEAR(m.log_pdf(in), 0.0, 1e-12);
  EXPECT_EQ(m.log_pdf(out), -std::numeric_limits<double>::infinity());
}

TEST(FlowModel, LayerForwardTouchesOnlyItsCoordinate) {
  Dag g(4, {{1, 3}, {2, 3}, {3, 4}});
  auto m = random_model(g, 3);
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    auto y = normal_vector(rng, 4);
    for (int k = 1; k <= 4; ++k) {
      auto out = m.layer_forward(y, k);
      for (int j = 0; j < 4; ++j)
        if (j != k - 1) EXPECT_EQ(out[j], y[j]);
    }
    // Two inputs differing at a parent of 3 give different parameters.
    auto y2 = y;
    y2[1] += 0.5;
    EXPECT_NE(m.layer_params(3, y).flatten(), m.layer_params(3, y2).flatten());
    EXPECT_EQ(m.layer_params(1, y).flatten(), m.layer_params(1, y2).flatten());
  }
}

TEST(FlowModel, RoundTripOnRandomModels) {
  Rng rng(3);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const int d = 1 + static_cast<int>(rng.below(5));
    auto m = random_model(sample_sorted_erdos_renyi(d, 0.6, t), derive_seed(7, "m", t));
    for (int p = 0; p < 50; ++p) {
      auto z = normal_vector(rng, d);
      auto back = m.inverse(m.forward(z));
      EXPECT_FALSE(back.clamped);
      for (int k = 0; k < d; ++k) worst = std::max(worst, std::abs(back.z[k] - z[k]));
    }
  }
  EXPECT_LE(worst, 1e-7);
}

TEST(FlowModel, TailInputsRaiseClampFlag) {
  auto m = random_model(Dag::chain(2), 4);
  std::vector<double> z{9.0, 0.0};
  EXPECT_TRUE(m.inverse(m.forward(z)).clamped);
  bool flagged = false;
  m.log_pdf(m.forward(z), &flagged);
  EXPECT_TRUE(flagged);
  std::vector<double> z0{0.5, -0.5};
  EXPECT_FALSE(m.inverse(m.forward(z0)).clamped);
}

TEST(FlowModel, JacobianTriangularMaskedAndMonotone) {
  Dag g(4, {{1, 2}, {2, 4}});  // 3 isolated, ancestors(4) = {1, 2}
  auto m = random_model(g, 5);
  Rng rng(4);
  for (int t = 0; t < 30; ++t) {
    auto z = normal_vector(rng, 4);
    auto base = m.forward(z);
    for (int j = 0; j < 4; ++j) {
      auto zp = z;
      zp[j] += 0.37;
      auto moved = m.forward(zp);
      for (int k = 0; k < 4; ++k) {
        auto anc = g.ancestors(k + 1);
        bool may_depend = j == k || std::find(anc.begin(), anc.end(), j + 1) != anc.end();
        if (!may_depend) EXPECT_EQ(moved[k], base[k]) << j << "->" << k;
      }
      EXPECT_GT(moved[j], base[j]);
    }
  }
}

TEST(FlowModel, LogPdfIntegratesToOneInOneDimension) {
  for (std::uint64_t s : {1u, 2u, 3u}) {
    auto m = random_model(Dag::empty(1), s, FlowConfig{});
    const int n = 100000;
    const double lo = -10.0, h = 20.0 / (n - 1);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      std::vector<double> x{lo + h * i};
      double w = (i == 0 || i == n - 1) ? 0.5 : 1.0;
      acc += w * std::exp(m.log_pdf(x));
    }
    EXPECT_NEAR(acc * h, 1.0, 1e-3);
  }
}

TEST(FlowModel, LogPdfMatchesFiniteDifferenceJacobian) {
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    const int d = 1 + t % 3;
    auto m = random_model(Dag::complete(d), derive_seed(3, "fd", t));
    m.set_standardization(std::vector<double>(d, 0.3), std::vector<double>(d, 1.7));
    auto z = normal_vector(rng, d);
    auto x = m.forward(z);
    Eigen::MatrixXd jac(d, d);
    const double h = 1e-6;
    for (int j = 0; j < d; ++j) {
      auto zp = z, zm = z;
      zp[j] += h;
      zm[j] -= h;
      auto a = m.forward(zp), b = m.forward(zm);
      for (int k = 0; k < d; ++k) jac(k, j) = (a[k] - b[k]) / (2 * h);
    }
    double base = 0.0;
    for (double v : z) base += normal_logpdf(v);
    double expect = base - std::log(std::abs(jac.determinant()));
    ASSERT_NEAR(m.log_pdf(x), expect, 1e-4);
  }
}

TEST(FlowModel, BatchedPathsAgreeWithPerRow) {
  Dag g(4, {{1, 2}, {1, 3}, {2, 4}, {3, 4}});
  auto m = random_model(g, 6);
  m.set_standardization({0.1, -0.2, 0.3, 0.0}, {1.2, 0.8, 1.0, 2.0});
  auto data = sample(m, 64, 9);
  auto rows = m.log_pdf_rows(data, 0, data.rows());
  for (std::size_t i = 0; i < data.rows(); ++i) EXPECT_NEAR(rows[i], m.log_pdf(data.row(i)), 1e-10);
  std::vector<std::size_t> idx(data.rows());
  std::iota(idx.begin(), idx.end(), 0);
  for (bool kink : {false, true}) {
    std::vector<double> batched(m.params().size(), 0.0), per_row(m.params().size(), 0.0);
    double total = m.log_pdf_gradient(data, idx, batched, kink);
    double tape_total = 0.0;
    for (std::size_t i = 0; i < data.rows(); ++i) {
      ad::Tape tape;
      auto pv = tape.leaves(m.params().values());
      auto lp = m.log_pdf_tape(tape, pv, data.row(i), kink);
      tape_total += lp.value();
      auto g1 = tape.gradient(lp);
      for (std::size_t j = 0; j < per_row.size(); ++j) per_row[j] += g1[j];
    }
    EXPECT_NEAR(total, tape_total, 1e-9 * std::abs(tape_total));
    for (std::size_t j = 0; j < per_row.size(); ++j)
      ASSERT_NEAR(batched[j], per_row[j], 1e-8 * std::max(1.0, std::abs(per_row[j]))) << j;
  }
}

TEST(FlowModel, SampleDeterministicAndFiniteDensity) {
  auto m = random_model(Dag::chain(3), 7);
  EXPECT_TRUE(sample(m, 0, 1).empty());
  auto a = sample(m, 10000, 2);
  EXPECT_EQ(a, sample(m, 10000, 2));
  for (double v : m.log_pdf_rows(a, 0, a.rows())) ASSERT_TRUE(std::isfinite(v));
}

TEST(FlowModel, CheckpointRoundTripIsBitExact) {
  auto m = random_model(Dag(3, {{1, 3}}), 8);
  m.set_standardization({0.1, 0.2, 0.3}, {1.0, 2.0, 3.0});
  auto j = to_json(m);
  EXPECT_EQ(j["format"], "causalflow-checkpoint-1");
  auto back = flow_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_TRUE(back == m);
  auto bad = j;
  bad["params"].erase(bad["params"].begin());
  EXPECT_THROW(flow_from_json(bad), InvalidArgument);
}

TEST(DenseBaseline, IsCompleteSortedDag) {
  EXPECT_EQ(dense_baseline_dag(3).edges(), (std::vector<Edge>{{1, 2}, {1, 3}, {2, 3}}));
}
