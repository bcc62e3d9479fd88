#include "selftest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <ostream>

#include <Eigen/Dense>

#include "causalflow/diff.hpp"
#include "causalflow/flow.hpp"
#include "causalflow/gaussian.hpp"
#include "causalflow/graph.hpp"
#include "causalflow/incr_mlp.hpp"
#include "causalflow/rng.hpp"
#include "causalflow/scm.hpp"
#include "causalflow/tasks.hpp"
#include "causalflow/train.hpp"
#include "causalflow/wdist.hpp"

namespace causalflow::cli {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

struct Suite {
  std::vector<SelftestRow> rows;

  void check(const std::string& module, const std::string& name, const std::function<std::string(bool&)>& body) {
    SelftestRow r{module, name, true, ""};
    try {
      r.detail = body(r.pass);
    } catch (const std::exception& ex) {
      r.pass = false;
      r.detail = std::string("exception: ") + ex.what();
    }
    rows.push_back(std::move(r));
  }
};

IncrMlpParams random_theta(Rng& rng, std::size_t n, double alpha) {
  IncrMlpParams p;
  p.alpha = alpha;
  for (std::size_t i = 0; i < n; ++i) {
    p.w1.push_back(std::exp(rng.uniform(-2.0, 1.5)));
    p.b1.push_back(rng.uniform(-4.0, 4.0));
    p.w2.push_back(std::exp(rng.uniform(-2.0, 1.5)));
  }
  p.b2 = rng.uniform(-2.0, 2.0);
  return p;
}

FlowModel jittered(const Dag& dag, std::uint64_t seed) {
  FlowConfig c;
  c.width = 6;
  c.hidden = {8, 8};
  FlowModel m(dag, c, seed);
  Rng rng(derive_seed(seed, "jitter"));
  for (double& v : m.params().values()) v += rng.uniform(-0.3, 0.3);
  return m;
}

void graph_checks(Suite& s) {
  s.check("graph", "quotient witness on 1->2->3, T={1,3}", [](bool& ok) {
    auto w = quotient_cycle_witness(Dag::chain(3), TargetSet({1, 3}, 3));
    ok = !w.empty() && !check_quotient_dag(Dag::chain(3), TargetSet({1, 3}, 3)) &&
         check_quotient_dag(Dag::chain(3), TargetSet({1, 2}, 3));
    return "cycle length " + std::to_string(w.size());
  });
  s.check("graph", "acyclic quotient implies parent-of-parent free", [](bool& ok) {
    int agree = 0;
    for (int t = 0; t < 300; ++t) {
      auto g = sample_sorted_erdos_renyi(5, 0.5, derive_seed(1, "g", t));
      Rng rng(derive_seed(1, "t", t));
      std::vector<int> ts{1 + static_cast<int>(rng.below(5))};
      for (int v = 1; v <= 5; ++v)
        if (rng.bernoulli(0.3) && v != ts[0]) ts.push_back(v);
      TargetSet T(ts, 5);
      const bool q = check_quotient_dag(g, T);
      if (q && !parent_of_parent_free(g, T)) ok = false;
      if (q != quotient_cycle_witness(g, T).empty()) ok = false;
      agree += q;
    }
    return std::to_string(agree) + "/300 acyclic";
  });
  s.check("graph", "sampling is deterministic", [](bool& ok) {
    ok = sample_sorted_erdos_renyi(10, 0.5, 7) == sample_sorted_erdos_renyi(10, 0.5, 7);
    return "";
  });
}

void scm_checks(Suite& s) {
  s.check("scm", "sample covariance matches analytic moments", [](bool& ok) {
    auto scm = random_linear_scm(Dag::chain(4), 3);
    auto data = sample(scm, 200000, 4);
    auto m = analytic_moments(scm);
    Eigen::MatrixXd x = Eigen::Map<const Eigen::Matrix<double, -1, -1, Eigen::RowMajor>>(
        data.values().data(), static_cast<Eigen::Index>(data.rows()), 4);
    Eigen::MatrixXd c = x.rowwise() - x.colwise().mean();
    const double err = ((c.transpose() * c) / double(data.rows() - 1) - m.cov).cwiseAbs().maxCoeff();
    ok = err < 0.05;
    return "max error " + num(err);
  });
  s.check("scm", "identity intervention has zero strength", [](bool& ok) {
    auto scm = random_linear_scm(Dag::chain(3), 5);
    Intervention iv{3, scm.weights[2], scm.bias[2], 0.0};
    const double same = interventional_strength(scm, iv);
    iv.new_bias += 1.0;
    const double shifted = interventional_strength(scm, iv);
    ok = std::abs(same) < 1e-12 && std::abs(shifted - 1.0) < 1e-12;
    return "shifted by 1 -> " + num(shifted);
  });
}

void diff_checks(Suite& s) {
  s.check("diff", "tape gradient matches central differences", [](bool& ok) {
    auto f = [](ad::Tape& t, const std::vector<ad::Var>& x) {
      auto a = t.mul(t.exp(t.mul(x[0], 0.3)), x[1]);
      auto b = t.log(t.add(t.mul(x[2], x[2]), 1.0));
      return t.add(t.div(a, t.add(b, 2.0)), t.leaky_segments(x[1], 0.3));
    };
    Rng rng(6);
    double worst = 0.0;
    for (int r = 0; r < 50; ++r) {
      std::vector<double> x{rng.uniform(-1, 1), rng.uniform(-0.9, 0.9), rng.uniform(-2, 2)};
      ad::Tape t;
      auto v = t.leaves(x).vars();
      auto g = t.gradient(f(t, v));
      for (std::size_t j = 0; j < 3; ++j) {
        auto eval = [&](double h) {
          auto y = x;
          y[j] += h;
          ad::Tape u;
          return f(u, u.leaves(y).vars()).value();
        };
        const double fd = (eval(1e-6) - eval(-1e-6)) / 2e-6;
        worst = std::max(worst, std::abs(g[j] - fd) / std::max(1.0, std::abs(fd)));
      }
    }
    ok = worst < 1e-6;
    return "max error " + num(worst);
  });
}

void incr_mlp_checks(Suite& s) {
  s.check("incr_mlp", "inverse round trip and slope bound", [](bool& ok) {
    Rng rng(7);
    double rt = 0.0, margin = 1e300;
    for (int t = 0; t < 2000; ++t) {
      auto p = random_theta(rng, 1 + rng.below(16), 0.3);
      const double x = rng.uniform(-8, 8);
      rt = std::max(rt, std::abs(g_inverse(g_forward(x, p), p) - x));
      double lb = 0.0;
      for (std::size_t i = 0; i < p.w1.size(); ++i) lb += p.w1[i] * p.w2[i];
      margin = std::min(margin, g_dx(x, p) - 0.15 * lb);
    }
    ok = rt < 1e-8 && margin > -1e-12;
    return "round trip " + num(rt);
  });
  s.check("incr_mlp", "gradient check of g against finite differences", [](bool& ok) {
    Rng rng(8);
    double worst = 0.0;
    for (int t = 0; t < 200; ++t) {
      auto p = random_theta(rng, 1 + rng.below(8), 0.3);
      const double x = rng.uniform(-4, 4);
      auto th = p.flatten();
      ad::Tape tape;
      auto tv = tape.leaves(th).vars();
      auto xv = tape.leaf(x);
      auto g = tape.gradient(g_forward_tape(tape, xv, tv, 0.3));
      auto eval = [&](std::size_t j, double h) {
        auto q = th;
        double xx = x;
        if (j == 0) xx += h;
        else q[j - 1] += h;
        return g_forward(xx, IncrMlpParams::unflatten(q, 0.3));
      };
      // Leaves were created theta first, then x.
      std::vector<double> analytic(th.size() + 1);
      analytic[0] = g[th.size()];
      for (std::size_t j = 0; j < th.size(); ++j) analytic[j + 1] = g[j];
      bool near_kink = false;
      for (double b : g_breakpoints(p)) near_kink = near_kink || std::abs(b - x) < 1e-4;
      if (near_kink) continue;
      for (std::size_t j = 0; j < analytic.size(); ++j) {
        const double fd = (eval(j, 1e-7) - eval(j, -1e-7)) / 2e-7;
        worst = std::max(worst, std::abs(analytic[j] - fd) / std::max(1.0, std::abs(fd)));
      }
    }
    ok = worst < 1e-5;
    return "max error " + num(worst);
  });
}

void flow_checks(Suite& s) {
  s.check("flow", "round trip on random models", [](bool& ok) {
    Rng rng(9);
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
      auto m = jittered(Dag::complete(1 + t % 4), derive_seed(9, "m", t));
      std::vector<double> z(static_cast<std::size_t>(m.size()));
      for (auto& v : z) v = rng.normal();
      auto back = m.inverse(m.forward(z)).z;
      for (std::size_t k = 0; k < z.size(); ++k) worst = std::max(worst, std::abs(back[k] - z[k]));
    }
    ok = worst < 1e-7;
    return "max error " + num(worst);
  });
  s.check("flow", "log_pdf matches finite-difference log det", [](bool& ok) {
    Rng rng(10);
    double worst = 0.0;
    for (int t = 0; t < 30; ++t) {
      const int d = 1 + t % 3;
      auto m = jittered(Dag::complete(d), derive_seed(10, "m", t));
      std::vector<double> z(d);
      for (auto& v : z) v = rng.normal();
      Eigen::MatrixXd jac(d, d);
      for (int j = 0; j < d; ++j) {
        auto zp = z, zm = z;
        zp[j] += 1e-6;
        zm[j] -= 1e-6;
        auto a = m.forward(zp), b = m.forward(zm);
        for (int k = 0; k < d; ++k) jac(k, j) = (a[k] - b[k]) / 2e-6;
      }
      double base = 0.0;
      for (double v : z) base += normal_logpdf(v);
      worst = std::max(worst, std::abs(m.log_pdf(m.forward(z)) - base + std::log(std::abs(jac.determinant()))));
    }
    ok = worst < 1e-4;
    return "max error " + num(worst);
  });
  s.check("flow", "outputs depend only on ancestors", [](bool& ok) {
    Dag g(4, {{1, 3}, {2, 4}});
    auto m = jittered(g, 11);
    std::vector<double> z{0.1, -0.4, 0.7, 0.2};
    auto base = m.forward(z);
    for (int j = 0; j < 4; ++j) {
      auto zp = z;
      zp[j] += 0.5;
      auto moved = m.forward(zp);
      for (int k = 0; k < 4; ++k) {
        auto anc = g.ancestors(k + 1);
        const bool may = j == k || std::find(anc.begin(), anc.end(), j + 1) != anc.end();
        if (!may && moved[k] != base[k]) ok = false;
      }
    }
    return "";
  });
}

void train_checks(Suite& s) {
  s.check("train", "nll gradient matches finite differences", [](bool& ok) {
    auto scm = random_linear_scm(Dag::chain(2), 12);
    auto data = sample(scm, 8, 13);
    auto m = jittered(Dag::chain(2), 14);
    std::vector<std::size_t> rows(data.rows());
    std::iota(rows.begin(), rows.end(), 0);
    std::vector<double> g(m.params().size());
    nll_gradient(m, data, rows, g);
    double worst = 0.0;
    for (std::size_t j = 0; j < g.size(); j += 7) {
      FlowModel a = m, b = m;
      a.params().values()[j] += 1e-6;
      b.params().values()[j] -= 1e-6;
      const double fd = (nll(a, data) - nll(b, data)) / 2e-6;
      worst = std::max(worst, std::abs(g[j] - fd) / std::max(1e-2, std::abs(fd)));
    }
    ok = worst < 1e-4;
    return "max error " + num(worst);
  });
  s.check("train", "training is deterministic and lowers NLL", [](bool& ok) {
    auto scm = random_linear_scm(Dag::chain(2), 15);
    auto data = sample(scm, 1000, 16);
    TrainConfig t;
    t.max_epochs = 4;
    t.batch_size = 64;
    t.seed = 17;
    auto a = train(jittered(Dag::chain(2), 18), data, t);
    auto b = train(jittered(Dag::chain(2), 18), data, t);
    ok = a.report.checksum == b.report.checksum && a.report.val_nll.back() < a.report.val_nll.front();
    return "val " + num(a.report.val_nll.front()) + " -> " + num(a.report.val_nll.back());
  });
}

void wdist_checks(Suite& s) {
  s.check("wdist", "nested distance stays 1 as W1 vanishes", [](bool& ok) {
    auto limit = example35_measure(0.0);
    double worst = 0.0;
    for (double eps : {0.5, 0.01, 1e-6}) {
      auto m = example35_measure(eps);
      ok = ok && wg_nested_discrete(m, limit) >= 1.0 - 1e-9;
      worst = std::max(worst, std::abs(w1_discrete(m, limit) - eps));
    }
    ok = ok && worst < 1e-12;
    return "W1 error " + num(worst);
  });
  s.check("wdist", "nested equals product on empty DAG, Pinsker holds", [](bool& ok) {
    Rng rng(19);
    for (int t = 0; t < 50; ++t) {
      std::vector<std::vector<double>> grid{{0.1, 0.5, 0.9}, {0.2, 0.7}};
      auto measure = [&] {
        return DiscreteMeasure::from_kernels(Dag::empty(2), grid, [&](int node, std::span<const double>) {
          std::vector<double> w(grid[node - 1].size());
          double total = 0.0;
          for (auto& x : w) total += (x = 0.05 + rng.uniform());
          double rest = 0.0;
          for (std::size_t i = 0; i + 1 < w.size(); ++i) rest += (w[i] /= total);
          w.back() = 1.0 - rest;
          return w;
        });
      };
      auto mu = measure(), nu = measure();
      const double prod = wg_product({mu.marginal(1), mu.marginal(2)}, {nu.marginal(1), nu.marginal(2)});
      if (std::abs(wg_nested_discrete(mu, nu) - prod) > 1e-9) ok = false;
      if (tv_discrete(mu, nu) > std::sqrt(kl_discrete(mu, nu) / 2.0) + 1e-15) ok = false;
    }
    return "";
  });
}

void tasks_checks(Suite& s) {
  s.check("tasks", "regression recovers a noiseless linear law", [](bool& ok) {
    Rng rng(20);
    Dataset d(200, 3);
    for (std::size_t i = 0; i < d.rows(); ++i) {
      d(i, 0) = rng.normal();
      d(i, 1) = rng.normal();
      d(i, 2) = 0.5 + 2.0 * d(i, 0) - 1.5 * d(i, 1);
    }
    std::vector<int> f{1, 2};
    auto reg = fit_linear_regressor(d, TargetSet({3}, 3), f);
    const double err = std::abs(reg.coef(0, 0) - 2.0) + std::abs(reg.coef(0, 1) + 1.5) + std::abs(reg.intercept[0] - 0.5);
    ok = err < 1e-9;
    return "coefficient error " + num(err);
  });
  s.check("tasks", "worst-case curve has one row per bucket", [](bool& ok) {
    TaskReport r;
    for (int i = 0; i < 40; ++i) r.rows.push_back({i, 1, 0.1 * i, "causal", Metric::kMse, 1.0 + i, 0});
    auto c = worst_case_curve(r, 4);
    ok = c.size() == 4 && *c.back().worst == 40.0 && *c.front().worst == 10.0;
    return "";
  });
}

}  // namespace

std::vector<SelftestRow> run_selftest() {
  Suite s;
  graph_checks(s);
  scm_checks(s);
  diff_checks(s);
  incr_mlp_checks(s);
  flow_checks(s);
  train_checks(s);
  wdist_checks(s);
  tasks_checks(s);
  return s.rows;
}

void print_selftest(std::ostream& out, const std::vector<SelftestRow>& rows) {
  std::size_t wm = 6, wc = 5;
  for (const auto& r : rows) {
    wm = std::max(wm, r.module.size());
    wc = std::max(wc, r.check.size());
  }
  auto pad = [](const std::string& s, std::size_t w) { return s + std::string(w - s.size(), ' '); };
  out << pad("module", wm) << "  " << pad("check", wc) << "  result\n";
  int failed = 0;
  for (const auto& r : rows) {
    out << pad(r.module, wm) << "  " << pad(r.check, wc) << "  " << (r.pass ? "PASS" : "FAIL");
    if (!r.detail.empty()) out << "  " << r.detail;
    out << '\n';
    failed += !r.pass;
  }
  out << rows.size() - failed << "/" << rows.size() << " checks passed\n";
}

}  // namespace causalflow::cli
