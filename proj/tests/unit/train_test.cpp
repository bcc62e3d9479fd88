#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "causalflow/error.hpp"
#include "causalflow/rng.hpp"
#include "causalflow/scm.hpp"
#include "causalflow/train.hpp"

using namespace causalflow;

namespace {

FlowConfig tiny() {
  FlowConfig c;
  c.width = 4;
  c.hidden = {6};
  return c;
}

TrainConfig quick(int epochs) {
  TrainConfig t;
  t.max_epochs = epochs;
  t.batch_size = 64;
  t.learning_rate = 5e-3;
  t.seed = 3;
  return t;
}

}  // namespace

TEST(TrainConfig, Validation) {
  TrainConfig t;
  t.val_fraction = 0.6;
  EXPECT_THROW(t.validate(), InvalidArgument);
  t = TrainConfig{};
  t.learning_rate = 0.0;
  EXPECT_THROW(t.validate(), InvalidArgument);
  t = TrainConfig{};
  t.batch_size = 0;
  EXPECT_THROW(t.validate(), InvalidArgument);
  EXPECT_NO_THROW(TrainConfig{}.validate());
}

TEST(Nll, SinglePointAndNonFiniteRow) {
  FlowModel m(Dag::chain(2), tiny(), 1);
  Dataset one(1, 2, {0.3, -0.4});
  EXPECT_DOUBLE_EQ(nll(m, one), -m.log_pdf(one.row(0)));
  FlowConfig q = tiny();
  q.base = BaseKind::kGaussianQuantile;
  FlowModel u(Dag::empty(1), q, 1);
  Dataset bad(3, 1, {0.4, 0.5, 50.0});
  try {
    nll(u, bad);
    FAIL() << "expected EvaluationError";
  } catch (const EvaluationError& e) {
    EXPECT_EQ(e.where(), 2u);
  }
  EXPECT_THROW(nll(m, Dataset(0, 2)), InvalidArgument);
}

TEST(NllGradient, MatchesFiniteDifferences) {
  auto scm = random_linear_scm(Dag::chain(3), 4);
  auto data = sample(scm, 16, 5);
  FlowModel m(Dag::chain(3), tiny(), 6);
  Rng rng(7);
  for (double& p : m.params().values()) p += rng.uniform(-0.2, 0.2);
  std::vector<std::size_t> rows(data.rows());
  std::iota(rows.begin(), rows.end(), 0);
  std::vector<double> g(m.params().size(), 0.0);
  double loss = nll_gradient(m, data, rows, g);
  EXPECT_NEAR(loss, nll(m, data), 1e-12);
  for (std::size_t j = 0; j < g.size(); ++j) {
    FlowModel a = m, b = m;
    const double h = 1e-6;
    a.params().values()[j] += h;
    b.params().values()[j] -= h;
    double fd = (nll(a, data) - nll(b, data)) / (2 * h);
    ASSERT_NEAR(g[j], fd, 1e-4 * std::max(1e-2, std::abs(fd))) << j;
  }
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Adam opt(3, 0.1);
  std::vector<double> p{1.0, 2.0, 3.0}, g{0.5, -4.0, 0.0};
  opt.step(p, g);
  EXPECT_NEAR(p[0], 0.9, 1e-6);
  EXPECT_NEAR(p[1], 2.1, 1e-6);
  EXPECT_DOUBLE_EQ(p[2], 3.0);
  std::vector<double> wrong(2);
  EXPECT_THROW(opt.step(p, wrong), InvalidArgument);
}

TEST(Train, ZeroEpochsReturnsModelUnchanged) {
  FlowModel m(Dag::chain(2), tiny(), 2);
  auto data = sample(random_linear_scm(Dag::chain(2), 1), 400, 2);
  auto r = train(m, data, quick(0));
  EXPECT_TRUE(r.model == m);
  EXPECT_EQ(r.report.epochs(), 0);
  EXPECT_EQ(r.report.checksum, parameter_checksum(m));
}

TEST(Train, RejectsTooFewRows) {
  FlowModel m(Dag::chain(2), tiny(), 2);
  auto data = sample(random_linear_scm(Dag::chain(2), 1), 100, 2);
  EXPECT_THROW(train(m, data, quick(1)), InvalidArgument);
}

TEST(Train, DeterministicDecreasingAndBestEpochIsArgmin) {
  auto scm = random_linear_scm(Dag::chain(3), 8);
  auto data = sample(scm, 2000, 9);
  FlowModel m(Dag::chain(3), tiny(), 10);
  int calls = 0;
  auto a = train(m, data, quick(8), [&](int, const FlowModel&, const FlowModel&) { ++calls; });
  auto b = train(m, data, quick(8));
  EXPECT_EQ(calls, a.report.epochs());
  EXPECT_EQ(a.report.checksum, b.report.checksum);
  EXPECT_EQ(a.report.val_nll, b.report.val_nll);
  const auto& v = a.report.val_nll;
  for (int e = 1; e <= 5; ++e) EXPECT_LT(a.report.train_nll[e], a.report.train_nll[0]);
  EXPECT_LT(a.report.train_nll[5], a.report.train_nll[1]);
  auto best = std::min_element(v.begin(), v.end()) - v.begin();
  EXPECT_EQ(a.report.best_epoch, best);
  EXPECT_EQ(a.report.checksum, parameter_checksum(a.model));
  std::stringstream csv;
  write_report_csv(csv, a.report);
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "epoch,train_nll,val_nll");
}

TEST(Train, OneDimensionalGaussianReachesEntropy) {
  auto data = sample(LinearGaussianScm::independent(Dag::empty(1)), 5000, 11);
  FlowConfig c;
  c.width = 8;
  FlowModel m(Dag::empty(1), c, 12);
  TrainConfig t = quick(60);
  t.batch_size = 128;
  auto r = train(m, data, t);
  auto test = sample(LinearGaussianScm::independent(Dag::empty(1)), 20000, 13);
  double held = nll(r.model, test);
  const double entropy = 0.5 * std::log(2 * std::acos(-1.0) * std::exp(1.0));
  EXPECT_NEAR(held, entropy, 0.05);
  // NLL - entropy estimates KL(data || model) >= 0 up to Monte Carlo noise.
  EXPECT_GT(held - entropy, -3.0 * std::sqrt(0.5 / 20000));
}
