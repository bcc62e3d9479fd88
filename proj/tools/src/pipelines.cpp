#include "pipelines.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "causalflow/dataset.hpp"
#include "causalflow/error.hpp"
#include "causalflow/parallel.hpp"
#include "causalflow/rng.hpp"
#include "causalflow/scm.hpp"
#include "causalflow/wdist.hpp"

namespace causalflow::cli {

namespace fs = std::filesystem;
using nlohmann::json;

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {
  rows_.reserve(16);
  for (const auto& h : header_)
    if (h.empty() || h.find_first_of(",\"\n\r") != std::string::npos)
      throw InvalidArgument("csv: bad header cell '" + h + "'");
}

void CsvTable::add(std::vector<std::string> row) {
  if (row.size() != header_.size()) throw InvalidArgument("csv: row width does not match header");
  for (const auto& c : row)
    if (c.empty() || c.find_first_of(",\"\n\r") != std::string::npos)
      throw InvalidArgument("csv: bad cell '" + c + "'");
  rows_.push_back(std::move(row));
}

void CsvTable::write(std::ostream& out) const {
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
    out << '\n';
  };
  line(header_);
  for (const auto& r : rows_) line(r);
}

std::string CsvTable::cell(double v) {
  if (!std::isfinite(v)) throw InvalidArgument("csv: non-finite value");
  return format_double(v);
}

namespace {

class Output {
 public:
  explicit Output(const ExperimentConfig& cfg) : dir_(cfg.output_dir) { fs::create_directories(dir_); }

  // The writer runs into a buffer first so a failed validation leaves no
  // partial file behind.
  void emit(const std::string& name, const std::function<void(std::ostream&)>& writer) {
    std::ostringstream buf;
    writer(buf);
    std::ofstream f(dir_ / name, std::ios::binary);
    f << buf.str();
    if (!f) throw std::runtime_error("cannot write " + (dir_ / name).string());
    result.files.push_back(name);
  }

  RunResult result;

 private:
  fs::path dir_;
};

std::string tag(const ExperimentConfig& cfg, std::uint64_t seed) {
  std::string k = to_string(cfg.kind);
  for (auto& ch : k)
    if (ch == '-') ch = '_';
  return k + "_seed" + std::to_string(seed);
}

Dag fixed_dag(const DagSpec& s, std::uint64_t seed) {
  if (s.p) return sample_sorted_erdos_renyi(s.d, *s.p, derive_seed(seed, "dag"));
  return Dag(s.d, s.edges);
}

ExperimentOptions experiment_options(const ExperimentConfig& cfg, std::uint64_t seed, TaskKind task) {
  ExperimentOptions e;
  e.task = task;
  e.interventions = cfg.interventions;
  e.n_train = cfg.n_train;
  e.n_test = cfg.n_test;
  e.gamma = cfg.gamma;
  e.seed = seed;
  return e;
}

LinearGaussianScm regression_setup(const ExperimentConfig& cfg, const TargetSet& t, std::uint64_t seed) {
  if (cfg.dag->p) return regression_scm(cfg.dag->d, *cfg.dag->p, t, seed);
  return random_linear_scm(Dag(cfg.dag->d, cfg.dag->edges), derive_seed(seed, "mechanisms"));
}

void emit_report(Output& out, const std::string& stem, const TaskReport& report, std::size_t buckets) {
  auto curve = worst_case_curve(report, buckets);
  out.emit(stem + "_rows.csv", [&](std::ostream& o) { write_task_report_csv(o, report); });
  out.emit(stem + "_curve.csv", [&](std::ostream& o) { write_curve_csv(o, curve); });
}

void run_tasks(const ExperimentConfig& cfg, std::uint64_t seed, Output& out) {
  const auto stem = tag(cfg, seed);
  if (cfg.kind == Kind::kPortfolio) {
    const auto& p = cfg.portfolio;
    auto setup = portfolio_scm(p.stocks, p.drivers, p.signals, p.p, seed);
    out.emit(stem + "_scm.json", [&](std::ostream& o) { o << to_json(setup.scm).dump(1) << '\n'; });
    auto report = robustness_experiment(setup.scm, setup.targets,
                                        experiment_options(cfg, seed, TaskKind::kPortfolio));
    emit_report(out, stem, report, cfg.buckets);
    return;
  }
  TargetSet t(cfg.targets, cfg.dag->d);
  auto scm = regression_setup(cfg, t, seed);
  out.emit(stem + "_scm.json", [&](std::ostream& o) { o << to_json(scm).dump(1) << '\n'; });
  TaskReport report;
  if (cfg.kind == Kind::kRegression) {
    report = robustness_experiment(scm, t, experiment_options(cfg, seed, TaskKind::kRegression));
  } else {
    AugmentationOptions a;
    a.experiment = experiment_options(cfg, seed, TaskKind::kRegression);
    a.n_synth = cfg.n_synth;
    a.generators = cfg.generators;
    a.flow = cfg.model;
    a.train = cfg.train;
    report = augmentation_experiment(scm, t, a);
  }
  emit_report(out, stem, report, cfg.buckets);
}

// Trains a flow on a linear-Gaussian SCM and tracks the shared-noise upper
// bound on the G-causal distance at epochs 1, 2, 4, ... for the best model
// so far.
void run_uap(const ExperimentConfig& cfg, std::uint64_t seed, Output& out) {
  const auto stem = tag(cfg, seed);
  const Dag dag = fixed_dag(*cfg.dag, seed);
  auto scm = random_linear_scm(dag, derive_seed(seed, "mechanisms"));
  auto data = sample(scm, cfg.n_train, derive_seed(seed, "train"));
  auto test = sample(scm, cfg.n_test, derive_seed(seed, "test"));
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(seed, "flow-train");
  CsvTable ckpt({"epoch", "wg_upper", "wg_upper_stderr", "wg_upper_l1", "test_nll"});
  std::uint64_t last = 0;
  const auto noise_seed = derive_seed(seed, "shared-noise");
  auto record = [&](int epoch, const FlowModel& best) {
    const auto sum = parameter_checksum(best);
    if (sum == last) return;
    last = sum;
    auto w = wg_shared_noise_upper(scm, best, cfg.n_samples, noise_seed);
    ckpt.add({CsvTable::cell(static_cast<long long>(epoch)), CsvTable::cell(w.euclidean),
              CsvTable::cell(w.stderr_euclidean), CsvTable::cell(w.l1), CsvTable::cell(nll(best, test))});
  };
  auto result = train(FlowModel(dag, cfg.model, derive_seed(seed, "flow-init")), data, tc,
                      [&](int epoch, const FlowModel&, const FlowModel& best) {
                        if ((epoch & (epoch - 1)) == 0) record(epoch, best);
                      });
  record(result.report.epochs(), result.model);
  const double entropy = gaussian_entropy(analytic_moments(scm).cov);
  out.emit(stem + "_train.csv", [&](std::ostream& o) { write_report_csv(o, result.report); });
  out.emit(stem + "_checkpoints.csv", [&](std::ostream& o) { ckpt.write(o); });
  out.emit(stem + "_model.json", [&](std::ostream& o) { o << to_json(result.model).dump() << '\n'; });
  out.result.summary[stem] = {{"entropy", entropy},
                              {"test_nll", nll(result.model, test)},
                              {"epochs", result.report.epochs()},
                              {"best_epoch", result.report.best_epoch},
                              {"checksum", result.report.checksum}};
}

void run_example35(const ExperimentConfig& cfg, Output& out) {
  CsvTable table({"seed", "eps", "causal_mse", "wg_nested", "w1"});
  TargetSet t({2}, 2);
  const std::vector<int> f{1};
  std::vector<double> eps = cfg.eps;
  if (std::find(eps.begin(), eps.end(), 0.0) == eps.end()) eps.push_back(0.0);
  const auto limit = example35_measure(0.0);
  for (auto seed : cfg.seeds) {
    for (std::size_t i = 0; i < eps.size(); ++i) {
      auto fit = sample_example35(eps[i], cfg.n_samples, derive_seed(seed, "example35-train", i));
      auto test = sample_example35(eps[i], cfg.n_samples, derive_seed(seed, "example35-test", i));
      const double m = mse(fit_linear_regressor(fit, t, f), test);
      const auto mu = example35_measure(eps[i]);
      table.add({std::to_string(seed), CsvTable::cell(eps[i]), CsvTable::cell(m),
                 CsvTable::cell(wg_nested_discrete(mu, limit)), CsvTable::cell(w1_discrete(mu, limit))});
    }
  }
  out.emit("example35.csv", [&](std::ostream& o) { table.write(o); });
}

// Random pairs of measures on a shared grid of at most max_support points:
// nested W_G against the KL bound diam * (2^d - 1) * sqrt(KL / 2).
void run_wg_bounds(const ExperimentConfig& cfg, std::uint64_t seed, Output& out) {
  const Dag dag = fixed_dag(*cfg.dag, seed);
  const int d = dag.size();
  CsvTable table({"instance", "support", "wg_nested", "exact", "w1", "tv", "kl", "bound", "pinsker_rhs"});
  Rng rng(derive_seed(seed, "wg-bounds"));
  for (std::size_t t = 0; t < cfg.instances; ++t) {
    std::vector<std::vector<double>> grid;
    int prod = 1;
    for (int k = 0; k < d; ++k) {
      const int size = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, cfg.max_support / prod))));
      prod *= size;
      std::vector<double> v;
      while (static_cast<int>(v.size()) < size) {
        const double x = std::round(rng.uniform() * 1000.0) / 1000.0;
        if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
      }
      std::sort(v.begin(), v.end());
      grid.push_back(v);
    }
    auto measure = [&](const char* label) {
      const auto base = derive_seed(seed, label, t);
      return DiscreteMeasure::from_kernels(dag, grid, [&](int node, std::span<const double> pa) {
        auto s = derive_seed(base, "kernel", static_cast<std::uint64_t>(node));
        for (double v : pa) s = derive_seed(s, "pa", static_cast<std::uint64_t>(std::llround(v * 1e6)));
        Rng k(s);
        std::vector<double> w(grid[static_cast<std::size_t>(node - 1)].size());
        double total = 0.0;
        for (auto& x : w) total += (x = 0.05 + k.uniform());
        double rest = 0.0;
        for (std::size_t i = 0; i + 1 < w.size(); ++i) rest += (w[i] /= total);
        w.back() = std::max(0.0, 1.0 - rest);
        return w;
      });
    };
    auto mu = measure("mu"), nu = measure("nu");
    auto nested = wg_nested_discrete_detailed(mu, nu);
    const double kl = kl_discrete(mu, nu), tv = tv_discrete(mu, nu);
    const double bound = l1_diameter(mu, nu) * (std::pow(2.0, d) - 1.0) * std::sqrt(kl / 2.0);
    table.add({std::to_string(t), std::to_string(mu.support.size()), CsvTable::cell(nested.value),
               nested.exact ? "1" : "0", CsvTable::cell(w1_discrete(mu, nu)), CsvTable::cell(tv),
               CsvTable::cell(kl), CsvTable::cell(bound), CsvTable::cell(std::sqrt(kl / 2.0))});
  }
  out.emit(tag(cfg, seed) + ".csv", [&](std::ostream& o) { table.write(o); });
}

}  // namespace

RunResult run_pipeline(const ExperimentConfig& cfg) {
  Output out(cfg);
  if (cfg.kind == Kind::kExample35) {
    run_example35(cfg, out);
    return out.result;
  }
  for (auto seed : cfg.seeds) {
    switch (cfg.kind) {
      case Kind::kRegression:
      case Kind::kPortfolio:
      case Kind::kAugmentation:
        run_tasks(cfg, seed, out);
        break;
      case Kind::kUap:
        run_uap(cfg, seed, out);
        break;
      case Kind::kWgBounds:
        run_wg_bounds(cfg, seed, out);
        break;
      case Kind::kExample35:
        break;
    }
  }
  return out.result;
}

RunResult run_and_record(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  auto result = run_pipeline(cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(cfg)));
  json manifest{{"config", cfg.to_json()}, {"config_hash", hash},   {"seeds", cfg.seeds},
                {"version", CAUSALFLOW_VERSION}, {"threads", thread_count()}, {"wall_seconds", secs},
                {"files", result.files},        {"summary", result.summary}};
  std::ofstream f(fs::path(cfg.output_dir) / "run.json");
  f << manifest.dump(2) << '\n';
  if (!f) throw std::runtime_error("cannot write run.json");
  return result;
}

}  // namespace causalflow::cli
