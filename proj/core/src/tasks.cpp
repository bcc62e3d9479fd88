#include "causalflow/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>

#include <Eigen/Dense>

#include "causalflow/error.hpp"
#include "causalflow/parallel.hpp"
#include "causalflow/rng.hpp"

namespace causalflow {

namespace {

Eigen::MatrixXd gather(const Dataset& data, std::span<const int> vertices) {
  Eigen::MatrixXd m(data.rows(), vertices.size());
  for (std::size_t i = 0; i < data.rows(); ++i) {
    auto r = data.row(i);
    for (std::size_t j = 0; j < vertices.size(); ++j) m(i, j) = r[vertices[j] - 1];
  }
  return m;
}

void check_vertices(const Dataset& data, std::span<const int> vertices) {
  for (int v : vertices)
    if (v < 1 || static_cast<std::size_t>(v) > data.cols())
      throw InvalidArgument("vertex " + std::to_string(v) + " outside the dataset");
}

struct OlsFit {
  Eigen::MatrixXd coef;  // |T| x p
  Eigen::VectorXd intercept;
  Eigen::MatrixXd residuals;  // n x |T|
  bool ridge = false;
};

OlsFit ols(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  const auto n = static_cast<double>(x.rows());
  Eigen::RowVectorXd xm = x.colwise().mean();
  Eigen::RowVectorXd ym = y.colwise().mean();
  Eigen::MatrixXd xc = x.rowwise() - xm;
  Eigen::MatrixXd yc = y.rowwise() - ym;
  OlsFit fit;
  Eigen::MatrixXd beta;  // p x |T|
  if (x.cols() == 0) {
    beta.resize(0, y.cols());
  } else {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xc);
    if (qr.rank() == xc.cols()) {
      beta = qr.solve(yc);
    } else {
      fit.ridge = true;
      Eigen::MatrixXd gram = xc.transpose() * xc;
      gram.diagonal().array() += 1e-8 * n;
      beta = gram.ldlt().solve(xc.transpose() * yc);
    }
  }
  fit.coef = beta.transpose();
  fit.intercept = (ym - xm * beta).transpose();
  fit.residuals = yc - xc * beta;
  return fit;
}

void check_fit_rows(const Dataset& data, std::span<const int> features) {
  if (data.rows() <= features.size() + 1)
    throw InvalidArgument("need more rows than features + 1 to fit");
}

}  // namespace

std::vector<int> causal_features(const Dag& dag, const TargetSet& targets) {
  return dag.parents_of(targets.indices());
}

std::vector<int> noncausal_features(const TargetSet& targets) { return targets.complement(); }

Eigen::VectorXd LinearRegressor::predict(std::span<const double> row) const {
  Eigen::VectorXd out = intercept;
  for (std::size_t j = 0; j < features.size(); ++j)
    out += coef.col(static_cast<Eigen::Index>(j)) * row[features[j] - 1];
  return out;
}

LinearRegressor fit_linear_regressor(const Dataset& data, const TargetSet& targets,
                                     std::span<const int> features) {
  check_vertices(data, features);
  check_vertices(data, targets.indices());
  check_fit_rows(data, features);
  auto fit = ols(gather(data, features), gather(data, targets.indices()));
  LinearRegressor reg;
  reg.features.assign(features.begin(), features.end());
  reg.targets = targets.indices();
  reg.coef = std::move(fit.coef);
  reg.intercept = std::move(fit.intercept);
  reg.ridge_fallback = fit.ridge;
  return reg;
}

double mse(const LinearRegressor& reg, const Dataset& data) {
  if (data.empty()) throw InvalidArgument("mse of an empty dataset");
  double total = 0.0;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    auto r = data.row(i);
    Eigen::VectorXd pred = reg.predict(r);
    for (std::size_t t = 0; t < reg.targets.size(); ++t) {
      double e = r[reg.targets[t] - 1] - pred[static_cast<Eigen::Index>(t)];
      total += e * e;
    }
  }
  return total / static_cast<double>(data.rows() * reg.targets.size());
}

std::optional<double> r2(const LinearRegressor& reg, const Dataset& data) {
  if (data.empty()) throw InvalidArgument("r2 of an empty dataset");
  const std::size_t k = reg.targets.size();
  std::vector<double> sse(k, 0.0), mean(k, 0.0), sst(k, 0.0);
  for (std::size_t i = 0; i < data.rows(); ++i)
    for (std::size_t t = 0; t < k; ++t) mean[t] += data(i, reg.targets[t] - 1);
  for (auto& m : mean) m /= static_cast<double>(data.rows());
  for (std::size_t i = 0; i < data.rows(); ++i) {
    auto r = data.row(i);
    Eigen::VectorXd pred = reg.predict(r);
    for (std::size_t t = 0; t < k; ++t) {
      double y = r[reg.targets[t] - 1];
      double e = y - pred[static_cast<Eigen::Index>(t)];
      sse[t] += e * e;
      sst[t] += (y - mean[t]) * (y - mean[t]);
    }
  }
  double acc = 0.0;
  for (std::size_t t = 0; t < k; ++t) {
    if (!(sst[t] > 0.0)) return std::nullopt;
    acc += 1.0 - sse[t] / sst[t];
  }
  return acc / static_cast<double>(k);
}

Eigen::VectorXd PortfolioRule::weights(std::span<const double> row) const {
  Eigen::VectorXd m = intercept;
  for (std::size_t j = 0; j < features.size(); ++j)
    m += coef.col(static_cast<Eigen::Index>(j)) * row[features[j] - 1];
  return residual_cov.llt().solve(m) / gamma;
}

PortfolioRule fit_mv_portfolio(const Dataset& data, const TargetSet& targets,
                               std::span<const int> features, double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw InvalidArgument("gamma must be positive");
  check_vertices(data, features);
  check_vertices(data, targets.indices());
  check_fit_rows(data, features);
  auto fit = ols(gather(data, features), gather(data, targets.indices()));
  PortfolioRule rule;
  rule.features.assign(features.begin(), features.end());
  rule.targets = targets.indices();
  rule.coef = std::move(fit.coef);
  rule.intercept = std::move(fit.intercept);
  rule.gamma = gamma;
  const auto n = static_cast<double>(data.rows());
  Eigen::MatrixXd cov = fit.residuals.transpose() * fit.residuals / n;
  cov = 0.5 * (cov + cov.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  Eigen::VectorXd diag = llt.matrixL().toDenseMatrix().diagonal();
  bool ok = llt.info() == Eigen::Success && diag.minCoeff() > 1e-12 * std::sqrt(cov.trace());
  if (!ok) {
    double tr = cov.trace();
    double lambda = 1e-6 * (tr > 0.0 ? tr : 1.0) / static_cast<double>(cov.rows());
    cov.diagonal().array() += lambda;
    rule.ridge_repaired = true;
  }
  rule.residual_cov = std::move(cov);
  return rule;
}

std::vector<double> portfolio_returns(const PortfolioRule& rule, const Dataset& data) {
  Eigen::LLT<Eigen::MatrixXd> llt(rule.residual_cov);
  const auto k = static_cast<Eigen::Index>(rule.targets.size());
  // Conditional means for all rows at once, then one multi-rhs solve.
  Eigen::MatrixXd means(k, static_cast<Eigen::Index>(data.rows()));
  for (std::size_t i = 0; i < data.rows(); ++i) {
    auto r = data.row(i);
    Eigen::VectorXd m = rule.intercept;
    for (std::size_t j = 0; j < rule.features.size(); ++j)
      m += rule.coef.col(static_cast<Eigen::Index>(j)) * r[rule.features[j] - 1];
    means.col(static_cast<Eigen::Index>(i)) = m;
  }
  Eigen::MatrixXd h = llt.solve(means) / rule.gamma;
  std::vector<double> out(data.rows());
  for (std::size_t i = 0; i < data.rows(); ++i) {
    auto r = data.row(i);
    double acc = 0.0;
    for (Eigen::Index t = 0; t < k; ++t)
      acc += r[rule.targets[static_cast<std::size_t>(t)] - 1] * h(t, static_cast<Eigen::Index>(i));
    out[i] = acc;
  }
  return out;
}

std::optional<double> sharpe(const PortfolioRule& rule, const Dataset& data) {
  if (data.rows() < 2) throw InvalidArgument("sharpe needs at least two rows");
  auto ret = portfolio_returns(rule, data);
  const auto n = static_cast<double>(ret.size());
  double mean = std::accumulate(ret.begin(), ret.end(), 0.0) / n;
  double ss = 0.0;
  for (double r : ret) ss += (r - mean) * (r - mean);
  double sd = std::sqrt(ss / (n - 1.0));
  if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) return std::nullopt;
  return mean / sd;
}

Intervention sample_random_intervention(const LinearGaussianScm& scm, const TargetSet& targets,
                                        std::uint64_t seed) {
  auto candidates = targets.complement();
  if (candidates.empty()) throw InvalidArgument("no vertex outside the target set");
  Rng rng(seed);
  Intervention iv;
  iv.node = candidates[rng.below(candidates.size())];
  iv.new_weights.resize(scm.dag.parents(iv.node).size());
  for (auto& w : iv.new_weights) w = rng.uniform(-2.0, 2.0);
  iv.new_bias = rng.uniform(-2.0, 2.0);
  iv.strength = interventional_strength(scm, iv);
  return iv;
}

std::string to_string(Metric m) {
  switch (m) {
    case Metric::kMse: return "mse";
    case Metric::kR2: return "r2";
    case Metric::kSharpe: return "sharpe";
  }
  return "?";
}

std::string to_string(TaskKind k) {
  return k == TaskKind::kRegression ? "regression" : "portfolio";
}

Estimator fit_estimator(const std::string& name, TaskKind task, const Dataset& data,
                        const TargetSet& targets, std::span<const int> features, double gamma) {
  Estimator e;
  e.name = name;
  if (task == TaskKind::kRegression)
    e.regressor = fit_linear_regressor(data, targets, features);
  else
    e.portfolio = fit_mv_portfolio(data, targets, features, gamma);
  return e;
}

TaskReport evaluate_under_interventions(const LinearGaussianScm& scm, const TargetSet& targets,
                                        const std::vector<Estimator>& estimators,
                                        const ExperimentOptions& options) {
  if (!check_quotient_dag(scm.dag, targets))
    throw ConfigError("target set violates the quotient condition");
  const std::size_t per = options.task == TaskKind::kRegression ? 2 : 1;
  const std::size_t stride = estimators.size() * per;
  std::vector<TaskRow> rows(options.interventions * stride);
  parallel_for(options.interventions, [&](std::size_t i) {
    auto iv_seed = derive_seed(options.seed, "intervention", i);
    auto test_seed = derive_seed(options.seed, "test", i);
    auto iv = sample_random_intervention(scm, targets, iv_seed);
    auto test = sample(intervene(scm, iv), options.n_test, test_seed);
    std::size_t slot = i * stride;
    for (const auto& e : estimators) {
      auto put = [&](Metric m, std::optional<double> v) {
        TaskRow& row = rows[slot++];
        row.intervention_id = static_cast<int>(i);
        row.node = iv.node;
        row.strength = iv.strength;
        row.estimator = e.name;
        row.metric = m;
        row.value = v;
        row.seed = test_seed;
      };
      if (e.regressor) {
        put(Metric::kMse, mse(*e.regressor, test));
        put(Metric::kR2, r2(*e.regressor, test));
      } else if (e.portfolio) {
        put(Metric::kSharpe, sharpe(*e.portfolio, test));
      } else {
        throw InvalidArgument("estimator " + e.name + " is not fitted");
      }
    }
  });
  return TaskReport{options.task, std::move(rows)};
}

Dataset observational_sample(const LinearGaussianScm& scm, const ExperimentOptions& options) {
  return sample(scm, options.n_train, derive_seed(options.seed, "train"));
}

TaskReport robustness_experiment(const LinearGaussianScm& scm, const TargetSet& targets,
                                 const ExperimentOptions& options) {
  if (!check_quotient_dag(scm.dag, targets))
    throw ConfigError("target set violates the quotient condition");
  auto train = observational_sample(scm, options);
  std::vector<Estimator> est;
  est.push_back(fit_estimator("causal", options.task, train, targets,
                              causal_features(scm.dag, targets), options.gamma));
  est.push_back(fit_estimator("noncausal", options.task, train, targets,
                              noncausal_features(targets), options.gamma));
  return evaluate_under_interventions(scm, targets, est, options);
}

std::string to_string(GeneratorKind g) {
  switch (g) {
    case GeneratorKind::kCausalFlow: return "causal_flow";
    case GeneratorKind::kDenseFlow: return "dense_flow";
    case GeneratorKind::kGaussianFit: return "gaussian_fit";
    case GeneratorKind::kPassthrough: return "passthrough";
  }
  return "?";
}

GeneratorKind generator_from_string(const std::string& s) {
  for (auto g : {GeneratorKind::kCausalFlow, GeneratorKind::kDenseFlow, GeneratorKind::kGaussianFit,
                 GeneratorKind::kPassthrough})
    if (to_string(g) == s) return g;
  throw InvalidArgument("unknown generator '" + s + "'");
}

Dataset generate_synthetic(GeneratorKind kind, const Dag& dag, const Dataset& data,
                           const AugmentationOptions& options, TrainReport* report) {
  const auto root = options.experiment.seed;
  const auto label = to_string(kind);
  const auto synth_seed = derive_seed(derive_seed(root, "synth"), label);
  switch (kind) {
    case GeneratorKind::kPassthrough:
      return data;
    case GeneratorKind::kGaussianFit: {
      Eigen::MatrixXd x(data.rows(), data.cols());
      for (std::size_t i = 0; i < data.rows(); ++i)
        for (std::size_t j = 0; j < data.cols(); ++j) x(i, j) = data(i, j);
      Eigen::RowVectorXd mean = x.colwise().mean();
      Eigen::MatrixXd xc = x.rowwise() - mean;
      Eigen::MatrixXd cov = xc.transpose() * xc / static_cast<double>(data.rows());
      Eigen::LLT<Eigen::MatrixXd> llt(cov);
      if (llt.info() != Eigen::Success) {
        cov.diagonal().array() += 1e-9 * std::max(cov.trace(), 1.0);
        llt.compute(cov);
      }
      Eigen::MatrixXd l = llt.matrixL();
      Rng rng(synth_seed);
      Dataset out(options.n_synth, data.cols());
      Eigen::VectorXd z(data.cols());
      for (std::size_t i = 0; i < options.n_synth; ++i) {
        for (auto& v : z) v = rng.normal();
        Eigen::VectorXd s = mean.transpose() + l * z;
        for (std::size_t j = 0; j < data.cols(); ++j) out(i, j) = s[static_cast<Eigen::Index>(j)];
      }
      return out;
    }
    case GeneratorKind::kCausalFlow:
    case GeneratorKind::kDenseFlow: {
      Dag g = kind == GeneratorKind::kCausalFlow ? dag : dense_baseline_dag(dag.size());
      FlowModel model(g, options.flow, derive_seed(derive_seed(root, "flow-init"), label));
      TrainConfig cfg = options.train;
      cfg.seed = derive_seed(derive_seed(root, "flow-train"), label);
      auto fitted = train(std::move(model), data, cfg);
      if (report) *report = fitted.report;
      return sample(fitted.model, options.n_synth, synth_seed);
    }
  }
  throw InvalidArgument("unknown generator");
}

TaskReport augmentation_experiment(const LinearGaussianScm& scm, const TargetSet& targets,
                                   const AugmentationOptions& options) {
  if (!check_quotient_dag(scm.dag, targets))
    throw ConfigError("target set violates the quotient condition");
  const auto& ex = options.experiment;
  auto real = observational_sample(scm, ex);
  auto features = causal_features(scm.dag, targets);
  std::vector<Estimator> est;
  for (auto g : options.generators) {
    auto synth = generate_synthetic(g, scm.dag, real, options);
    est.push_back(fit_estimator(to_string(g), ex.task, synth, targets, features, ex.gamma));
  }
  return evaluate_under_interventions(scm, targets, est, ex);
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidArgument("quantile of an empty set");
  if (!(q >= 0.0 && q <= 1.0)) throw InvalidArgument("quantile level outside [0, 1]");
  std::sort(values.begin(), values.end());
  double h = q * static_cast<double>(values.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(h));
  auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<CurveRow> worst_case_curve(const TaskReport& report, std::size_t buckets) {
  if (report.rows.empty()) throw InvalidArgument("empty report");
  if (buckets == 0) throw InvalidArgument("need at least one bucket");
  // Groups keyed by (estimator, metric) in order of first appearance.
  std::vector<std::pair<std::string, Metric>> keys;
  std::map<std::pair<std::string, int>, std::vector<const TaskRow*>> groups;
  for (const auto& r : report.rows) {
    auto key = std::make_pair(r.estimator, static_cast<int>(r.metric));
    auto [it, fresh] = groups.try_emplace(key);
    if (fresh) keys.emplace_back(r.estimator, r.metric);
    it->second.push_back(&r);
  }
  std::vector<CurveRow> out;
  for (const auto& [name, metric] : keys) {
    auto rows = groups[{name, static_cast<int>(metric)}];
    if (rows.size() < buckets)
      throw InvalidArgument("fewer rows than buckets for " + name + "/" + to_string(metric));
    std::stable_sort(rows.begin(), rows.end(), [](const TaskRow* a, const TaskRow* b) {
      if (a->strength != b->strength) return a->strength < b->strength;
      return a->intervention_id < b->intervention_id;
    });
    const bool lower_better = metric == Metric::kMse;
    for (std::size_t b = 0; b < buckets; ++b) {
      std::size_t lo = b * rows.size() / buckets;
      std::size_t hi = (b + 1) * rows.size() / buckets;
      CurveRow c;
      c.estimator = name;
      c.metric = metric;
      c.bucket_lo = rows[lo]->strength;
      c.bucket_hi = rows[hi - 1]->strength;
      std::vector<double> vals;
      for (std::size_t k = lo; k < hi; ++k)
        if (rows[k]->value) vals.push_back(*rows[k]->value);
      if (!vals.empty()) {
        auto [mn, mx] = std::minmax_element(vals.begin(), vals.end());
        c.worst = lower_better ? *mx : *mn;
        c.median = quantile(vals, 0.5);
        c.q75 = quantile(vals, lower_better ? 0.75 : 0.25);
        c.q95 = quantile(vals, lower_better ? 0.95 : 0.05);
      }
      out.push_back(std::move(c));
    }
  }
  return out;
}

namespace {

std::string csv_value(const std::optional<double>& v) {
  if (!v) return "NA";
  if (!std::isfinite(*v)) throw InvalidArgument("non-finite value in CSV output");
  return format_double(*v);
}

void check_label(const std::string& s) {
  if (s.empty() || s.find_first_of(",\"\n\r") != std::string::npos)
    throw InvalidArgument("estimator label '" + s + "' is not CSV-safe");
}

}  // namespace

void write_task_report_csv(std::ostream& out, const TaskReport& report) {
  for (const auto& r : report.rows) {
    check_label(r.estimator);
    if (!std::isfinite(r.strength) || r.strength < 0.0)
      throw InvalidArgument("bad strength in report row");
  }
  out << "intervention_id,node,strength,estimator,metric,value,seed\n";
  for (const auto& r : report.rows)
    out << r.intervention_id << ',' << r.node << ',' << format_double(r.strength) << ','
        << r.estimator << ',' << to_string(r.metric) << ',' << csv_value(r.value) << ',' << r.seed
        << '\n';
}

void write_curve_csv(std::ostream& out, const std::vector<CurveRow>& curve) {
  for (const auto& c : curve) {
    check_label(c.estimator);
    if (!std::isfinite(c.bucket_lo) || !std::isfinite(c.bucket_hi) || c.bucket_lo > c.bucket_hi)
      throw InvalidArgument("bad bucket bounds");
  }
  out << "bucket_lo,bucket_hi,estimator,metric,worst,median,q75,q95\n";
  for (const auto& c : curve)
    out << format_double(c.bucket_lo) << ',' << format_double(c.bucket_hi) << ',' << c.estimator
        << ',' << to_string(c.metric) << ',' << csv_value(c.worst) << ',' << csv_value(c.median)
        << ',' << csv_value(c.q75) << ',' << csv_value(c.q95) << '\n';
}

LinearGaussianScm regression_scm(int d, double p, const TargetSet& targets, std::uint64_t seed) {
  if (targets.dimension() != d) throw InvalidArgument("target set dimension mismatch");
  for (std::uint64_t attempt = 0; attempt < 10000; ++attempt) {
    auto dag = sample_sorted_erdos_renyi(d, p, derive_seed(seed, "dag", attempt));
    if (check_quotient_dag(dag, targets))
      return random_linear_scm(dag, derive_seed(seed, "mechanisms"));
  }
  throw ConfigError("no sampled DAG satisfies the quotient condition");
}

PortfolioSetup portfolio_scm(int stocks, int drivers, int signals, double p, std::uint64_t seed) {
  if (stocks < 1 || drivers < 0 || signals < 0 || drivers + signals < 1)
    throw InvalidArgument("portfolio graph needs stocks and at least one factor");
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("edge probability outside [0, 1]");
  const int d = drivers + stocks + signals;
  Rng rng(derive_seed(seed, "portfolio-dag"));
  std::vector<Edge> edges;
  for (int f = 1; f <= drivers; ++f)
    for (int s = drivers + 1; s <= drivers + stocks; ++s)
      if (rng.bernoulli(p)) edges.emplace_back(f, s);
  for (int s = drivers + 1; s <= drivers + stocks; ++s)
    for (int k = drivers + stocks + 1; k <= d; ++k)
      if (rng.bernoulli(p)) edges.emplace_back(s, k);
  std::sort(edges.begin(), edges.end());
  Dag dag(d, std::move(edges));
  std::vector<int> t(static_cast<std::size_t>(stocks));
  std::iota(t.begin(), t.end(), drivers + 1);
  return {random_linear_scm(dag, derive_seed(seed, "mechanisms")), TargetSet(std::move(t), d)};
}

Dataset sample_example35(double eps, std::size_t n, std::uint64_t seed) {
  if (!(eps >= 0.0) || !std::isfinite(eps)) throw InvalidArgument("eps must be non-negative");
  Rng rng(seed);
  Dataset out(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    double u = rng.bernoulli(0.5) ? 1.0 : -1.0;
    out(i, 0) = eps * u;
    out(i, 1) = eps > 0.0 ? (out(i, 0) > 0.0 ? 1.0 : -1.0) : u;
  }
  return out;
}

DiscreteMeasure example35_measure(double eps) {
  if (!(eps >= 0.0) || !std::isfinite(eps)) throw InvalidArgument("eps must be non-negative");
  DiscreteMeasure mu{Dag(2, {{1, 2}}), {{eps, 1.0}, {-eps, -1.0}}, {0.5, 0.5}};
  mu.validate();
  return mu;
}

}  // namespace causalflow
