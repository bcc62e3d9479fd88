#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "causalflow/error.hpp"
#include "causalflow/rng.hpp"
#include "causalflow/tasks.hpp"

using namespace causalflow;

namespace {

LinearGaussianScm chain07() {
  auto scm = LinearGaussianScm::independent(Dag::chain(2));
  scm.weights[1] = {0.7};
  return scm;
}

TaskReport toy_report(const std::vector<double>& strengths, const std::vector<double>& values,
                      Metric metric = Metric::kMse) {
  TaskReport r;
  for (std::size_t i = 0; i < strengths.size(); ++i)
    r.rows.push_back({static_cast<int>(i), 1, strengths[i], "causal", metric, values[i], 0});
  return r;
}

}  // namespace

TEST(Features, CausalAndNonCausalSets) {
  Dag g(5, {{1, 3}, {2, 3}, {3, 4}, {4, 5}});
  TargetSet t({3, 4}, 5);
  EXPECT_EQ(causal_features(g, t), (std::vector<int>{1, 2}));
  EXPECT_EQ(noncausal_features(t), (std::vector<int>{1, 2, 5}));
}

TEST(Regressor, RecoversExactLinearMap) {
  Rng rng(1);
  Dataset x(50, 3);
  for (std::size_t i = 0; i < 50; ++i) {
    x(i, 0) = rng.normal();
    x(i, 1) = rng.normal();
    x(i, 2) = 1.5 - 2.0 * x(i, 0) + 0.25 * x(i, 1);
  }
  std::vector<int> f{1, 2};
  auto reg = fit_linear_regressor(x, TargetSet({3}, 3), f);
  EXPECT_NEAR(reg.coef(0, 0), -2.0, 1e-8);
  EXPECT_NEAR(reg.coef(0, 1), 0.25, 1e-8);
  EXPECT_NEAR(reg.intercept[0], 1.5, 1e-8);
  EXPECT_FALSE(reg.ridge_fallback);
  EXPECT_NEAR(mse(reg, x), 0.0, 1e-15);
  EXPECT_NEAR(*r2(reg, x), 1.0, 1e-12);
}

TEST(Regressor, ChainSlopeAndInterceptOnly) {
  const std::size_t n = 100000;
  auto data = sample(chain07(), n, 2);
  std::vector<int> f{1};
  auto reg = fit_linear_regressor(data, TargetSet({2}, 2), f);
  EXPECT_NEAR(reg.coef(0, 0), 0.7, 4.0 / std::sqrt(n));
  auto mean_only = fit_linear_regressor(data, TargetSet({2}, 2), std::vector<int>{});
  auto col = data.column(1);
  EXPECT_NEAR(mean_only.intercept[0], std::accumulate(col.begin(), col.end(), 0.0) / n, 1e-12);
  EXPECT_NEAR(*r2(mean_only, data), 0.0, 1e-12);
  EXPECT_THROW(fit_linear_regressor(data.head(2), TargetSet({2}, 2), f), InvalidArgument);
}

TEST(Regressor, RankDeficiencyFallsBackToRidge) {
  auto data = sample_example35(0.0, 1000, 3);
  std::vector<int> f{1};
  auto reg = fit_linear_regressor(data, TargetSet({2}, 2), f);
  EXPECT_TRUE(reg.ridge_fallback);
  EXPECT_TRUE(std::isfinite(reg.coef(0, 0)));
  Dataset flat(10, 2);
  for (std::size_t i = 0; i < 10; ++i) flat(i, 0) = static_cast<double>(i);
  auto c = fit_linear_regressor(flat, TargetSet({2}, 2), f);
  EXPECT_FALSE(r2(c, flat).has_value());
}

TEST(Example35, CausalRegressionDiscontinuity) {
  const std::size_t n = 100000;
  std::vector<int> f{1};
  TargetSet t({2}, 2);
  auto near = sample_example35(0.01, n, 4);
  EXPECT_LE(mse(fit_linear_regressor(near, t, f), near), 0.05);
  auto limit = sample_example35(0.0, n, 5);
  EXPECT_NEAR(mse(fit_linear_regressor(limit, t, f), limit), 1.0, 0.02);
  auto m = example35_measure(0.25);
  EXPECT_EQ(m.support, (std::vector<std::vector<double>>{{0.25, 1.0}, {-0.25, -1.0}}));
  EXPECT_THROW(example35_measure(-1.0), InvalidArgument);
}

TEST(Portfolio, ScalarMeanVarianceFormula) {
  Rng rng(6);
  const std::size_t n = 200000;
  const double m = 0.3, s = 0.8;
  Dataset x(n, 1);
  for (std::size_t i = 0; i < n; ++i) x(i, 0) = m + s * rng.normal();
  auto rule = fit_mv_portfolio(x, TargetSet({1}, 1), std::vector<int>{}, 2.0);
  std::vector<double> row{0.0};
  EXPECT_NEAR(rule.weights(row)[0], m / (2.0 * s * s), 4.0 / std::sqrt(n) * 5);
  auto doubled = fit_mv_portfolio(x, TargetSet({1}, 1), std::vector<int>{}, 4.0);
  EXPECT_NEAR(doubled.weights(row)[0], 0.5 * rule.weights(row)[0], 1e-14);
  auto huge = fit_mv_portfolio(x, TargetSet({1}, 1), std::vector<int>{}, 1e12);
  EXPECT_LT(std::abs(huge.weights(row)[0]), 1e-11);
  EXPECT_THROW(fit_mv_portfolio(x, TargetSet({1}, 1), std::vector<int>{}, 0.0), InvalidArgument);
}

TEST(Portfolio, ConvergesToPopulationRule) {
  // Factor 1 drives assets 2 and 3: X_T = B x_1 + c + e, Cov(e) = diag(1, 0.25).
  auto scm = LinearGaussianScm::independent(Dag(3, {{1, 2}, {1, 3}}));
  scm.weights[1] = {0.8};
  scm.weights[2] = {-0.5};
  scm.bias = {0.0, 0.2, 0.1};
  scm.noise_std = {1.0, 1.0, 0.5};
  const std::size_t n = 200000;
  auto data = sample(scm, n, 7);
  std::vector<int> f{1};
  auto rule = fit_mv_portfolio(data, TargetSet({2, 3}, 3), f, 1.0);
  // h(x) = Sigma^-1 (B x + c): slope per asset = B_j / var_j, intercept c_j / var_j.
  std::vector<double> at0{0.0, 0.0, 0.0}, at1{1.0, 0.0, 0.0};
  auto h0 = rule.weights(at0), h1 = rule.weights(at1);
  const double tol = 4.0 / std::sqrt(static_cast<double>(n)) * 8;
  EXPECT_NEAR(h0[0], 0.2, tol);
  EXPECT_NEAR(h0[1], 0.1 / 0.25, tol);
  EXPECT_NEAR(h1[0] - h0[0], 0.8, tol);
  EXPECT_NEAR(h1[1] - h0[1], -0.5 / 0.25, tol);
}

TEST(Sharpe, ConstantSignFlipAndClt) {
  Dataset c(100, 1);
  for (std::size_t i = 0; i < 100; ++i) c(i, 0) = 1.0;
  PortfolioRule fixed{{}, {1}, Eigen::MatrixXd(1, 0), Eigen::VectorXd::Ones(1), Eigen::MatrixXd::Identity(1, 1), 1.0, false};
  EXPECT_FALSE(sharpe(fixed, c).has_value());
  Rng rng(8);
  const std::size_t n = 100000;
  Dataset x(n, 1);
  for (std::size_t i = 0; i < n; ++i) x(i, 0) = 0.2 + 1.5 * rng.normal();
  auto s = sharpe(fixed, x);
  ASSERT_TRUE(s);
  EXPECT_NEAR(*s, 0.2 / 1.5, 4.0 / std::sqrt(n));
  auto flipped = fixed;
  flipped.intercept *= -1.0;
  EXPECT_DOUBLE_EQ(*sharpe(flipped, x), -*s);
  EXPECT_THROW(sharpe(fixed, x.head(1)), InvalidArgument);
}

TEST(Interventions, NodeOutsideTargetsAndPositiveStrength) {
  auto scm = random_linear_scm(sample_sorted_erdos_renyi(6, 0.5, 1), 2);
  TargetSet t({2, 4}, 6);
  double total = 0.0;
  for (int i = 0; i < 10000; ++i) {
    auto iv = sample_random_intervention(scm, t, derive_seed(3, "iv", i));
    ASSERT_FALSE(t.contains(iv.node));
    ASSERT_GT(iv.strength, 0.0);
    ASSERT_EQ(iv.new_weights.size(), scm.dag.parents(iv.node).size());
    for (double w : iv.new_weights) ASSERT_TRUE(w >= -2.0 && w <= 2.0);
    total += iv.strength;
  }
  EXPECT_TRUE(std::isfinite(total / 10000));
  auto a = sample_random_intervention(scm, t, 99);
  auto b = sample_random_intervention(scm, t, 99);
  EXPECT_EQ(a.node, b.node);
  EXPECT_EQ(a.new_weights, b.new_weights);
  EXPECT_THROW(sample_random_intervention(scm, TargetSet({1, 2, 3, 4, 5, 6}, 6), 1), InvalidArgument);
}

TEST(Robustness, ZeroInterventionsAndQuotientCheck) {
  TargetSet t({5, 6}, 10);
  auto scm = regression_scm(10, 0.5, t, 1);
  EXPECT_TRUE(check_quotient_dag(scm.dag, t));
  ExperimentOptions o;
  o.interventions = 0;
  o.n_train = 500;
  EXPECT_TRUE(robustness_experiment(scm, t, o).rows.empty());
  auto bad = LinearGaussianScm::independent(Dag::chain(3));
  EXPECT_THROW(robustness_experiment(bad, TargetSet({1, 3}, 3), o), ConfigError);
}

TEST(Robustness, ReportLayoutDeterminismAndLowStrengthOrdering) {
  TargetSet t({5, 6}, 10);
  auto scm = regression_scm(10, 0.5, t, 2);
  ExperimentOptions o;
  o.interventions = 60;
  o.n_train = 5000;
  o.n_test = 2000;
  o.seed = 2;
  auto rep = robustness_experiment(scm, t, o);
  ASSERT_EQ(rep.rows.size(), 60u * 4);
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    EXPECT_EQ(rep.rows[i].intervention_id, static_cast<int>(i / 4));
    EXPECT_FALSE(t.contains(rep.rows[i].node));
  }
  auto again = robustness_experiment(scm, t, o);
  for (std::size_t i = 0; i < rep.rows.size(); ++i) EXPECT_EQ(rep.rows[i].value, again.rows[i].value);
  auto curve = worst_case_curve(rep, 5);
  double causal = 0.0, noncausal = 0.0;
  for (const auto& c : curve)
    if (c.metric == Metric::kMse && c.bucket_lo == curve.front().bucket_lo)
      (c.estimator == "causal" ? causal : noncausal) = *c.median;
  EXPECT_LE(noncausal, causal);
}

TEST(Augmentation, PassthroughReproducesRobustnessCausalNumbers) {
  TargetSet t({5, 6}, 10);
  auto scm = regression_scm(10, 0.5, t, 3);
  AugmentationOptions a;
  a.generators = {GeneratorKind::kPassthrough, GeneratorKind::kGaussianFit};
  a.experiment.interventions = 20;
  a.experiment.n_train = 3000;
  a.experiment.n_test = 1000;
  a.experiment.seed = 3;
  auto aug = augmentation_experiment(scm, t, a);
  auto rob = robustness_experiment(scm, t, a.experiment);
  std::vector<double> x, y;
  for (const auto& r : aug.rows)
    if (r.estimator == "passthrough") x.push_back(r.value.value_or(NAN));
  for (const auto& r : rob.rows)
    if (r.estimator == "causal") y.push_back(r.value.value_or(NAN));
  ASSERT_EQ(x.size(), y.size());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(x[i], y[i]);
  EXPECT_EQ(generator_from_string("dense_flow"), GeneratorKind::kDenseFlow);
  EXPECT_THROW(generator_from_string("vae"), InvalidArgument);
}

TEST(WorstCase, CurveProperties) {
  auto single = worst_case_curve(toy_report({0.5}, {2.0}), 1);
  ASSERT_EQ(single.size(), 1u);
  EXPECT_EQ(*single[0].worst, 2.0);
  EXPECT_EQ(*single[0].median, 2.0);
  auto flat = worst_case_curve(toy_report({0.1, 0.2, 0.3, 0.4}, {1.0, 1.0, 1.0, 1.0}), 2);
  for (const auto& c : flat) EXPECT_EQ(*c.worst, 1.0);
  Rng rng(9);
  std::vector<double> s(100), v(100);
  for (int i = 0; i < 100; ++i) {
    s[i] = rng.uniform(0, 5);
    v[i] = rng.uniform(0, 3);
  }
  auto curve = worst_case_curve(toy_report(s, v), 10);
  ASSERT_EQ(curve.size(), 10u);
  for (std::size_t b = 0; b < curve.size(); ++b) {
    EXPECT_GE(*curve[b].worst, *curve[b].median);
    EXPECT_GE(*curve[b].q95, *curve[b].q75);
    EXPECT_GE(*curve[b].q75, *curve[b].median);
    if (b > 0) EXPECT_GE(curve[b].bucket_lo, curve[b - 1].bucket_hi);
  }
  auto sh = worst_case_curve(toy_report(s, v, Metric::kSharpe), 10);
  for (const auto& c : sh) {
    EXPECT_LE(*c.worst, *c.median);
    EXPECT_LE(*c.q95, *c.q75);
  }
  EXPECT_THROW(worst_case_curve(toy_report({0.1}, {1.0}), 2), InvalidArgument);
  EXPECT_THROW(worst_case_curve(TaskReport{}, 1), InvalidArgument);
}

TEST(WorstCase, MissingValuesAreSkipped) {
  auto r = toy_report({0.1, 0.2, 0.3, 0.4}, {1.0, 5.0, 2.0, 3.0});
  r.rows[1].value.reset();
  auto curve = worst_case_curve(r, 2);
  EXPECT_EQ(*curve[0].worst, 1.0);
  r.rows[0].value.reset();
  EXPECT_FALSE(worst_case_curve(r, 2)[0].worst.has_value());
}

TEST(Quantile, LinearInterpolation) {
  EXPECT_DOUBLE_EQ(quantile({3.0, 1.0, 2.0, 4.0}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile({1.0, 2.0}, 0.75), 1.75);
  EXPECT_THROW(quantile({}, 0.5), InvalidArgument);
}

TEST(Csv, SchemasAndMissingValues) {
  auto r = toy_report({0.1, 0.2}, {1.0, 2.0});
  r.rows[1].value.reset();
  std::stringstream a;
  write_task_report_csv(a, r);
  std::string line;
  std::getline(a, line);
  EXPECT_EQ(line, "intervention_id,node,strength,estimator,metric,value,seed");
  std::getline(a, line);
  std::getline(a, line);
  EXPECT_EQ(line.substr(line.size() - 4), "NA,0");
  std::stringstream b;
  write_curve_csv(b, worst_case_curve(r, 1));
  std::getline(b, line);
  EXPECT_EQ(line, "bucket_lo,bucket_hi,estimator,metric,worst,median,q75,q95");
  r.rows[0].estimator = "a,b";
  std::stringstream c;
  EXPECT_THROW(write_task_report_csv(c, r), InvalidArgument);
  EXPECT_TRUE(c.str().empty());
}

TEST(PortfolioGraph, BipartiteStructure) {
  auto ps = portfolio_scm(20, 3, 2, 0.5, 1);
  EXPECT_EQ(ps.scm.size(), 25);
  EXPECT_EQ(ps.targets.size(), 20u);
  for (auto [i, j] : ps.scm.dag.edges()) {
    bool driver_to_stock = i <= 3 && j >= 4 && j <= 23;
    bool stock_to_signal = i >= 4 && i <= 23 && j >= 24;
    EXPECT_TRUE(driver_to_stock || stock_to_signal);
  }
  EXPECT_TRUE(check_quotient_dag(ps.scm.dag, ps.targets));
}
