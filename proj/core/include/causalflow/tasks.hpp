#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "causalflow/dataset.hpp"
#include "causalflow/flow.hpp"
#include "causalflow/graph.hpp"
#include "causalflow/scm.hpp"
#include "causalflow/train.hpp"
#include "causalflow/wdist.hpp"

namespace causalflow {

// Feature sets: PA(T) for the G-causal estimator, V \ T for the standard one.
std::vector<int> causal_features(const Dag& dag, const TargetSet& targets);
std::vector<int> noncausal_features(const TargetSet& targets);

// OLS with intercept of X_T on X_features, one column per target.
struct LinearRegressor {
  std::vector<int> features;
  std::vector<int> targets;
  Eigen::MatrixXd coef;       // |T| x |features|
  Eigen::VectorXd intercept;  // |T|
  bool ridge_fallback = false;

  Eigen::VectorXd predict(std::span<const double> row) const;
};

// Rank-deficient designs fall back to ridge with lambda = 1e-8 on the
// per-row Gram matrix and set ridge_fallback.
LinearRegressor fit_linear_regressor(const Dataset& data, const TargetSet& targets,
                                     std::span<const int> features);

// Averaged over target coordinates and rows.
double mse(const LinearRegressor& reg, const Dataset& data);
// 1 - MSE_j / Var_j averaged over targets j; missing if some target has
// zero variance on `data`.
std::optional<double> r2(const LinearRegressor& reg, const Dataset& data);

// h(x) = (1/gamma) Sigma_c^{-1} (B x + c).
struct PortfolioRule {
  std::vector<int> features;
  std::vector<int> targets;
  Eigen::MatrixXd coef;       // B
  Eigen::VectorXd intercept;  // c
  Eigen::MatrixXd residual_cov;
  double gamma = 1.0;
  bool ridge_repaired = false;

  Eigen::VectorXd weights(std::span<const double> row) const;
};

// Sigma_c is the residual covariance of the OLS fit; if it is not positive
// definite it gets lambda = 1e-6 trace / |T| added to the diagonal.
PortfolioRule fit_mv_portfolio(const Dataset& data, const TargetSet& targets,
                               std::span<const int> features, double gamma);

// Realized returns <x_T, h(x_F)> per row.
std::vector<double> portfolio_returns(const PortfolioRule& rule, const Dataset& data);
// mean / sample std of realized returns; missing when the std is zero.
std::optional<double> sharpe(const PortfolioRule& rule, const Dataset& data);

// Node uniform over V \ T; new parent weights and bias iid Uniform(-2, 2).
Intervention sample_random_intervention(const LinearGaussianScm& scm, const TargetSet& targets,
                                        std::uint64_t seed);

enum class TaskKind { kRegression, kPortfolio };
enum class Metric { kMse, kR2, kSharpe };
std::string to_string(Metric m);
std::string to_string(TaskKind k);

struct TaskRow {
  int intervention_id = 0;
  int node = 0;
  double strength = 0.0;
  std::string estimator;
  Metric metric = Metric::kMse;
  std::optional<double> value;
  std::uint64_t seed = 0;
};

struct TaskReport {
  TaskKind task = TaskKind::kRegression;
  std::vector<TaskRow> rows;  // intervention-id order, then estimator order
};

struct ExperimentOptions {
  TaskKind task = TaskKind::kRegression;
  std::size_t interventions = 200;
  std::size_t n_train = 10000;
  std::size_t n_test = 5000;
  double gamma = 1.0;
  std::uint64_t seed = 0;
};

// A fitted downstream estimator: regressor or portfolio rule.
struct Estimator {
  std::string name;
  std::optional<LinearRegressor> regressor;
  std::optional<PortfolioRule> portfolio;
};

Estimator fit_estimator(const std::string& name, TaskKind task, const Dataset& data,
                        const TargetSet& targets, std::span<const int> features, double gamma);

// Evaluates every estimator on fresh samples of each random intervention.
// Interventions and test sets are drawn from seeds derived from
// options.seed, so reports with the same seed see the same interventions.
TaskReport evaluate_under_interventions(const LinearGaussianScm& scm, const TargetSet& targets,
                                        const std::vector<Estimator>& estimators,
                                        const ExperimentOptions& options);

// Observational training sample shared by the experiments.
Dataset observational_sample(const LinearGaussianScm& scm, const ExperimentOptions& options);

// Fits "causal" (PA(T)) and "noncausal" (V \ T) estimators on the
// observational sample and evaluates them under interventions.
TaskReport robustness_experiment(const LinearGaussianScm& scm, const TargetSet& targets,
                                 const ExperimentOptions& options);

enum class GeneratorKind { kCausalFlow, kDenseFlow, kGaussianFit, kPassthrough };
std::string to_string(GeneratorKind g);
GeneratorKind generator_from_string(const std::string& s);

struct AugmentationOptions {
  ExperimentOptions experiment;
  std::size_t n_synth = 10000;
  std::vector<GeneratorKind> generators = {GeneratorKind::kCausalFlow, GeneratorKind::kDenseFlow,
                                           GeneratorKind::kGaussianFit, GeneratorKind::kPassthrough};
  FlowConfig flow;
  TrainConfig train;
};

// Synthetic training set from one generator fitted to `data`. Passthrough
// returns `data` itself.
Dataset generate_synthetic(GeneratorKind kind, const Dag& dag, const Dataset& data,
                           const AugmentationOptions& options, TrainReport* report = nullptr);

// Each generator is fitted on the observational sample; a G-causal
// estimator (named after the generator) is fitted on its synthetic output
// and evaluated as in robustness_experiment.
TaskReport augmentation_experiment(const LinearGaussianScm& scm, const TargetSet& targets,
                                   const AugmentationOptions& options);

struct CurveRow {
  double bucket_lo = 0.0;
  double bucket_hi = 0.0;
  std::string estimator;
  Metric metric = Metric::kMse;
  std::optional<double> worst, median, q75, q95;
};

// Equal-count strength buckets per (estimator, metric). Worst is the max
// for MSE and the min for R^2 and Sharpe; q75 and q95 are quantiles in the
// worsening direction (upper for MSE, lower for the others). Missing values
// are skipped. Throws InvalidArgument when a group has fewer rows than
// buckets.
std::vector<CurveRow> worst_case_curve(const TaskReport& report, std::size_t buckets = 10);

// Linear-interpolation quantile of unsorted values, q in [0, 1].
double quantile(std::vector<double> values, double q);

void write_task_report_csv(std::ostream& out, const TaskReport& report);
void write_curve_csv(std::ostream& out, const std::vector<CurveRow>& curve);

// Erdos-Renyi SCM whose DAG satisfies the quotient condition for `targets`;
// the DAG is redrawn (with derived seeds) until it does.
LinearGaussianScm regression_scm(int d, double p, const TargetSet& targets, std::uint64_t seed);

// Bipartite portfolio graph: driver factors (vertices 1..drivers) feed the
// stocks, which feed signal factors (the last vertices); edges drawn with
// probability p. Stocks are the targets.
struct PortfolioSetup {
  LinearGaussianScm scm;
  TargetSet targets;
};
PortfolioSetup portfolio_scm(int stocks, int drivers, int signals, double p, std::uint64_t seed);

// X = eps U, Y = sign(X) with U Rademacher(1/2); at eps = 0 the limit law
// X = 0, Y = U. Vertex 1 is X, vertex 2 is Y.
Dataset sample_example35(double eps, std::size_t n, std::uint64_t seed);
DiscreteMeasure example35_measure(double eps);

}  // namespace causalflow
