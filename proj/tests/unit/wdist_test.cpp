#include <gtest/gtest.h>

#include <cmath>

#include "causalflow/error.hpp"
#include "causalflow/flow.hpp"
#include "causalflow/rng.hpp"
#include "causalflow/scm.hpp"
#include "causalflow/tasks.hpp"
#include "causalflow/wdist.hpp"
#include "instances.hpp"
#include "oracles.hpp"

using namespace causalflow;

TEST(W1OneDim, Examples) {
  Measure1d a{{0.0, 1.0, 3.0}, {0.2, 0.5, 0.3}};
  EXPECT_DOUBLE_EQ(w1_1d(a, a), 0.0);
  EXPECT_DOUBLE_EQ(w1_1d({{0.0}, {1.0}}, {{1.0}, {1.0}}), 1.0);
  Measure1d b{{0.7, 1.7, 3.7}, {0.2, 0.5, 0.3}};
  EXPECT_NEAR(w1_1d(a, b), 0.7, 1e-15);
  EXPECT_THROW(w1_1d(Measure1d{}, a), InvalidArgument);
  auto e = Measure1d::empirical(std::vector<double>{3.0, 1.0});
  EXPECT_NEAR(w1_1d(e, {{2.0}, {1.0}}), 1.0, 1e-15);
}

TEST(W1OneDim, MatchesCouplingLp) {
  Rng rng(1);
  for (int t = 0; t < 100; ++t) {
    auto g = instances::random_grid(rng, {1 + static_cast<int>(rng.below(5))});
    auto h = instances::random_grid(rng, {1 + static_cast<int>(rng.below(5))});
    auto mu = instances::random_measure(Dag::empty(1), g, 2 * t);
    auto nu = instances::random_measure(Dag::empty(1), h, 2 * t + 1);
    double lp = oracle::coupling_w1(mu, nu);
    EXPECT_NEAR(w1_1d(mu.marginal(1), nu.marginal(1)), lp, 1e-12);
    EXPECT_NEAR(wg_nested_discrete(mu, nu), lp, 1e-12);
  }
}

TEST(WgProduct, ExamplesAndNormSandwich) {
  Measure1d a{{0.0, 2.0}, {0.5, 0.5}};
  Measure1d b{{1.0}, {1.0}};
  EXPECT_DOUBLE_EQ(wg_product({a, b}, {a, b}), 0.0);
  EXPECT_DOUBLE_EQ(wg_product({a}, {b}), w1_1d(a, b));
  const double c1 = 0.3, c2 = -1.2;
  Measure1d as{{c1, 2.0 + c1}, {0.5, 0.5}}, bs{{1.0 + c2}, {1.0}};
  double v = wg_product({a, b}, {as, bs});
  EXPECT_NEAR(v, std::abs(c1) + std::abs(c2), 1e-15);
  EXPECT_GE(v, std::hypot(c1, c2));
  EXPECT_THROW(wg_product({a}, {a, b}), InvalidArgument);
}

TEST(Nested, ZeroOnEqualMeasuresAndDagMismatch) {
  Rng rng(2);
  auto g = instances::random_grid(rng, {3, 2, 2});
  auto mu = instances::random_measure(Dag::chain(3), g, 3);
  EXPECT_NEAR(wg_nested_discrete(mu, mu), 0.0, 1e-15);
  auto other = instances::random_measure(Dag::empty(3), g, 3);
  EXPECT_THROW(wg_nested_discrete(mu, other), InvalidArgument);
}

TEST(Nested, DiscontinuityOfExample35) {
  auto limit = example35_measure(0.0);
  for (double eps : {1.0, 0.5, 0.1, 0.01, 1e-6}) {
    auto m = example35_measure(eps);
    EXPECT_GE(wg_nested_discrete(m, limit), 1.0 - 1e-9) << eps;
    EXPECT_NEAR(oracle::coupling_w1(m, limit), eps, 1e-12);
    EXPECT_NEAR(w1_discrete(m, limit), eps, 1e-12);
  }
}

TEST(Nested, DominatesPlainWassersteinAndMatchesBicausalLp) {
  Rng rng(4);
  const std::vector<Dag> dags{Dag::chain(2), Dag::empty(2)};
  for (int t = 0; t < 200; ++t) {
    const Dag& dag = dags[t % 2];
    auto g = instances::random_grid(rng, {2 + static_cast<int>(rng.below(2)), 2});
    auto h = instances::random_grid(rng, {2, 1 + static_cast<int>(rng.below(2))});
    auto mu = instances::random_measure(dag, g, derive_seed(5, "mu", t), 0.2);
    auto nu = instances::random_measure(dag, h, derive_seed(5, "nu", t), 0.2);
    auto res = wg_nested_discrete_detailed(mu, nu);
    EXPECT_TRUE(res.exact);
    EXPECT_GE(res.value, w1_discrete(mu, nu) - 1e-12);
    EXPECT_NEAR(res.value, oracle::bicausal_lp(mu, nu), 1e-9) << t;
  }
}

TEST(Nested, EmptyDagEqualsProduct) {
  Rng rng(6);
  for (int t = 0; t < 50; ++t) {
    const int d = 2 + t % 2;
    std::vector<int> sizes(d);
    for (auto& s : sizes) s = 1 + static_cast<int>(rng.below(3));
    auto g = instances::random_grid(rng, sizes);
    auto h = instances::random_grid(rng, sizes);
    auto mu = instances::random_measure(Dag::empty(d), g, 2 * t);
    auto nu = instances::random_measure(Dag::empty(d), h, 2 * t + 1);
    std::vector<Measure1d> ma, na;
    for (int i = 1; i <= d; ++i) {
      ma.push_back(mu.marginal(i));
      na.push_back(nu.marginal(i));
    }
    EXPECT_NEAR(wg_nested_discrete(mu, nu), wg_product(ma, na), 1e-12);
  }
}

TEST(Nested, LimitsRaiseConfigError) {
  Rng rng(7);
  auto g = instances::random_grid(rng, {3, 3, 3});
  auto mu = instances::random_measure(Dag::chain(3), g, 1);
  auto nu = instances::random_measure(Dag::chain(3), g, 2);
  NestedOptions tight;
  tight.max_subproblems = 1;
  EXPECT_THROW(wg_nested_discrete_detailed(mu, nu, tight), ConfigError);
}

TEST(Nested, NonForestIsLabelledUpperBound) {
  Rng rng(8);
  Dag collider(3, {{1, 3}, {2, 3}});
  auto g = instances::random_grid(rng, {2, 2, 2});
  auto mu = instances::random_measure(collider, g, 1);
  auto nu = instances::random_measure(collider, g, 2);
  auto res = wg_nested_discrete_detailed(mu, nu);
  EXPECT_FALSE(res.exact);
  EXPECT_GE(res.value, w1_discrete(mu, nu) - 1e-12);
}

TEST(Divergences, ExamplesAndPinsker) {
  Rng rng(9);
  auto g = instances::random_grid(rng, {3, 2});
  auto mu = instances::random_measure(Dag::chain(2), g, 1);
  EXPECT_DOUBLE_EQ(tv_discrete(mu, mu), 0.0);
  EXPECT_DOUBLE_EQ(kl_discrete(mu, mu), 0.0);
  DiscreteMeasure a{Dag::empty(1), {{0.0}}, {1.0}}, b{Dag::empty(1), {{1.0}}, {1.0}};
  EXPECT_DOUBLE_EQ(tv_discrete(a, b), 1.0);
  EXPECT_EQ(kl_discrete(a, b), std::numeric_limits<double>::infinity());
  for (int t = 0; t < 200; ++t) {
    auto grid = instances::random_grid(rng, {3, 3});
    auto p = instances::random_measure(Dag::chain(2), grid, 2 * t);
    auto q = instances::random_measure(Dag::chain(2), grid, 2 * t + 1);
    EXPECT_LE(tv_discrete(p, q), std::sqrt(kl_discrete(p, q) / 2) + 1e-15);
  }
  Eigen::VectorXd m0 = Eigen::VectorXd::Zero(1), m1 = Eigen::VectorXd::Ones(1);
  Eigen::MatrixXd s = Eigen::MatrixXd::Identity(1, 1);
  EXPECT_NEAR(kl_gaussian(m0, s, m1, s), 0.5, 1e-15);
  EXPECT_NEAR(kl_gaussian(m0, s, m0, s), 0.0, 1e-15);
  Eigen::MatrixXd bad = -s;
  EXPECT_THROW(kl_gaussian(m0, bad, m1, s), InvalidArgument);
}

TEST(Divergences, DiameterUsesBothSupports) {
  DiscreteMeasure a{Dag::empty(2), {{0.0, 0.0}, {0.5, 0.5}}, {0.5, 0.5}};
  DiscreteMeasure b{Dag::empty(2), {{1.0, 1.0}}, {1.0}};
  EXPECT_DOUBLE_EQ(l1_diameter(a, b), 2.0);
}

TEST(DiscreteMeasure, ConditionalsAndJson) {
  DiscreteMeasure m{Dag::chain(2), {{0.0, 1.0}, {0.0, 2.0}, {1.0, 5.0}}, {0.25, 0.25, 0.5}};
  m.validate();
  std::vector<double> pa{0.0};
  auto c = m.conditional(2, pa);
  EXPECT_EQ(c.points, (std::vector<double>{1.0, 2.0}));
  EXPECT_NEAR(c.probs[0], 0.5, 1e-15);
  std::vector<double> none{3.0};
  EXPECT_TRUE(m.conditional(2, none).points.empty());
  auto back = discrete_measure_from_json(to_json(m));
  EXPECT_EQ(back.support, m.support);
  EXPECT_EQ(back.probs, m.probs);
  DiscreteMeasure dup{Dag::empty(1), {{0.0}, {0.0}}, {0.5, 0.5}};
  EXPECT_THROW(dup.validate(), InvalidArgument);
}

TEST(SharedNoise, ExactModelGivesZeroAndRandomModelPositive) {
  auto scm = LinearGaussianScm::independent(Dag::empty(1));
  scm.bias[0] = 0.7;
  scm.noise_std[0] = 1.9;
  FlowConfig c;
  c.width = 1;
  FlowModel m(Dag::empty(1), c, 1);
  // g(z) = 1000 rho(z / 1000) = z for |z| < 1000.
  auto th = m.params().values();
  th[0] = 1e-3 - c.positivity_floor;
  th[1] = 0.0;
  th[2] = 1e3 - c.positivity_floor;
  th[3] = 0.0;
  m.set_standardization({0.7}, {1.9});
  auto est = wg_shared_noise_upper(scm, m, 20000, 3);
  EXPECT_LT(est.euclidean, 1e-9);
  auto chain = random_linear_scm(Dag::chain(3), 2);
  FlowModel r(Dag::chain(3), FlowConfig{}, 4);
  auto e2 = wg_shared_noise_upper(chain, r, 5000, 5);
  EXPECT_GT(e2.euclidean, 0.0);
  EXPECT_TRUE(std::isfinite(e2.euclidean));
  EXPECT_GE(e2.l1, e2.euclidean);
  EXPECT_GT(e2.stderr_euclidean, 0.0);
  FlowModel wrong(Dag::empty(3), FlowConfig{}, 4);
  EXPECT_THROW(wg_shared_noise_upper(chain, wrong, 100, 1), InvalidArgument);
}
