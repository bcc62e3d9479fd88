#include "causalflow/wdist.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <tuple>

#include <Eigen/Cholesky>

#include "causalflow/error.hpp"
#include "causalflow/gaussian.hpp"
#include "causalflow/parallel.hpp"
#include "causalflow/rng.hpp"
#include "causalflow/transport.hpp"

namespace causalflow {

namespace {

constexpr double kProbTol = 1e-12;

using Key = std::vector<double>;

std::vector<double> values_at(std::span<const double> x, const std::vector<int>& nodes) {
  std::vector<double> out;
  out.reserve(nodes.size());
  for (int v : nodes) out.push_back(x[static_cast<std::size_t>(v - 1)]);
  return out;
}

// Sorts by point and merges duplicates.
Measure1d canonical(Measure1d m) {
  std::vector<std::size_t> idx(m.points.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return m.points[a] < m.points[b]; });
  Measure1d out;
  for (std::size_t k : idx) {
    if (!out.points.empty() && out.points.back() == m.points[k]) {
      out.probs.back() += m.probs[k];
    } else {
      out.points.push_back(m.points[k]);
      out.probs.push_back(m.probs[k]);
    }
  }
  return out;
}

// Conditional tables of one measure: per node, parent values -> law.
class ConditionalIndex {
 public:
  explicit ConditionalIndex(const DiscreteMeasure& mu) : d_(mu.dimension()) {
    tables_.resize(static_cast<std::size_t>(d_));
    for (int i = 1; i <= d_; ++i) {
      const auto& pa = mu.dag.parents(i);
      const std::vector<int> parents(pa.begin(), pa.end());
      auto& table = tables_[static_cast<std::size_t>(i - 1)];
      for (std::size_t s = 0; s < mu.support.size(); ++s) {
        if (!(mu.probs[s] > 0.0)) continue;
        auto& m = table[values_at(mu.support[s], parents)];
        m.points.push_back(mu.support[s][static_cast<std::size_t>(i - 1)]);
        m.probs.push_back(mu.probs[s]);
      }
      for (auto& [key, m] : table) {
        m = canonical(std::move(m));
        const double total = std::accumulate(m.probs.begin(), m.probs.end(), 0.0);
        for (double& p : m.probs) p /= total;
      }
    }
  }

  const Measure1d& get(int node, const Key& parents) const {
    const auto& table = tables_[static_cast<std::size_t>(node - 1)];
    const auto it = table.find(parents);
    if (it == table.end()) throw EvaluationError("conditional law of a null parent configuration", static_cast<std::size_t>(node));
    return it->second;
  }

 private:
  int d_;
  std::vector<std::map<Key, Measure1d>> tables_;
};

struct Coupling {
  const Measure1d* mu = nullptr;
  const Measure1d* nu = nullptr;
  TransportPlan plan;
};

class NestedSolver {
 public:
  NestedSolver(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const NestedOptions& options)
      : dag_(mu.dag), mu_(mu), nu_(nu), options_(options) {}

  NestedResult run() {
    const int d = dag_.size();
    struct State {
      std::vector<double> x, xp;
      double p;
    };
    std::vector<State> states{{std::vector<double>(static_cast<std::size_t>(d)),
                               std::vector<double>(static_cast<std::size_t>(d)), 1.0}};
    double total = 0.0;
    for (int i = 1; i <= d; ++i) {
      const auto& pa = dag_.parents(i);
      const std::vector<int> parents(pa.begin(), pa.end());
      std::vector<State> next;
      for (const auto& st : states) {
        const Coupling& c = coupling(i, values_at(st.x, parents), values_at(st.xp, parents));
        for (Eigen::Index k = 0; k < c.plan.plan.rows(); ++k) {
          for (Eigen::Index l = 0; l < c.plan.plan.cols(); ++l) {
            const double q = c.plan.plan(k, l);
            if (!(q > 0.0)) continue;
            State s = st;
            s.x[static_cast<std::size_t>(i - 1)] = c.mu->points[static_cast<std::size_t>(k)];
            s.xp[static_cast<std::size_t>(i - 1)] = c.nu->points[static_cast<std::size_t>(l)];
            s.p *= q;
            total += s.p * std::abs(s.x[static_cast<std::size_t>(i - 1)] - s.xp[static_cast<std::size_t>(i - 1)]);
            next.push_back(std::move(s));
            if (next.size() > options_.max_states) {
              throw ConfigError("wg_nested_discrete: composed coupling exceeds " +
                                std::to_string(options_.max_states) + " states");
            }
          }
        }
      }
      states = std::move(next);
    }
    NestedResult out;
    out.value = total;
    out.subproblems = solved_;
    out.exact = true;
    for (int i = 1; i <= d; ++i) out.exact = out.exact && dag_.parents(i).size() <= 1;
    return out;
  }

 private:
  // Sum over single-parent children c of `node` of their nested values.
  double downstream(int node, double b, double bp) {
    double s = 0.0;
    for (int c : dag_.children(node)) {
      if (dag_.parents(c).size() != 1) continue;
      s += coupling(c, Key{b}, Key{bp}).plan.cost;
    }
    return s;
  }

  const Coupling& coupling(int node, const Key& a, const Key& ap) {
    const auto key = std::make_tuple(node, a, ap);
    if (const auto it = memo_.find(key); it != memo_.end()) return it->second;
    if (++solved_ > options_.max_subproblems) {
      throw ConfigError("wg_nested_discrete: more than " + std::to_string(options_.max_subproblems) +
                        " transport subproblems");
    }
    Coupling c;
    c.mu = &mu_.get(node, a);
    c.nu = &nu_.get(node, ap);
    Eigen::MatrixXd cost(static_cast<Eigen::Index>(c.mu->points.size()),
                         static_cast<Eigen::Index>(c.nu->points.size()));
    for (Eigen::Index k = 0; k < cost.rows(); ++k) {
      for (Eigen::Index l = 0; l < cost.cols(); ++l) {
        const double b = c.mu->points[static_cast<std::size_t>(k)];
        const double bp = c.nu->points[static_cast<std::size_t>(l)];
        cost(k, l) = std::abs(b - bp) + downstream(node, b, bp);
      }
    }
    c.plan = optimal_transport(c.mu->probs, c.nu->probs, cost);
    return memo_.emplace(key, std::move(c)).first->second;
  }

  const Dag& dag_;
  ConditionalIndex mu_;
  ConditionalIndex nu_;
  NestedOptions options_;
  std::map<std::tuple<int, Key, Key>, Coupling> memo_;
  std::size_t solved_ = 0;
};

std::map<Key, double> as_map(const DiscreteMeasure& mu) {
  std::map<Key, double> m;
  for (std::size_t s = 0; s < mu.support.size(); ++s) m[mu.support[s]] += mu.probs[s];
  return m;
}

void check_same_space(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const char* what) {
  mu.validate();
  nu.validate();
  if (!(mu.dag == nu.dag)) throw InvalidArgument(std::string(what) + ": measures have different DAGs");
}

}  // namespace

Measure1d Measure1d::empirical(std::span<const double> samples) {
  if (samples.empty()) throw InvalidArgument("Measure1d::empirical: no samples");
  Measure1d m;
  m.points.assign(samples.begin(), samples.end());
  m.probs.assign(samples.size(), 1.0 / static_cast<double>(samples.size()));
  return m;
}

void Measure1d::validate() const {
  if (points.empty()) throw InvalidArgument("Measure1d: empty measure");
  if (points.size() != probs.size()) throw InvalidArgument("Measure1d: points/probs size mismatch");
  double total = 0.0;
  for (std::size_t k = 0; k < points.size(); ++k) {
    if (!std::isfinite(points[k])) throw InvalidArgument("Measure1d: non-finite point");
    if (!(probs[k] >= 0.0)) throw InvalidArgument("Measure1d: negative weight");
    total += probs[k];
  }
  if (!(total > 0.0)) throw InvalidArgument("Measure1d: zero total mass");
}

void DiscreteMeasure::validate() const {
  const auto d = static_cast<std::size_t>(dag.size());
  if (support.empty()) throw InvalidArgument("DiscreteMeasure: empty support");
  if (support.size() != probs.size()) throw InvalidArgument("DiscreteMeasure: support/probs size mismatch");
  double total = 0.0;
  std::set<Key> seen;
  for (std::size_t s = 0; s < support.size(); ++s) {
    if (support[s].size() != d) throw InvalidArgument("DiscreteMeasure: point has wrong dimension");
    if (!(probs[s] >= 0.0)) throw InvalidArgument("DiscreteMeasure: negative probability");
    if (!seen.insert(support[s]).second) throw InvalidArgument("DiscreteMeasure: repeated support point");
    total += probs[s];
  }
  if (std::abs(total - 1.0) > kProbTol) throw InvalidArgument("DiscreteMeasure: probabilities do not sum to 1");
}

Measure1d DiscreteMeasure::conditional(int node, std::span<const double> parent_values) const {
  if (node < 1 || node > dag.size()) throw InvalidArgument("conditional: node out of range");
  const auto& pa = dag.parents(node);
  if (parent_values.size() != pa.size()) throw InvalidArgument("conditional: wrong number of parent values");
  Measure1d m;
  for (std::size_t s = 0; s < support.size(); ++s) {
    if (!(probs[s] > 0.0)) continue;
    bool match = true;
    for (std::size_t k = 0; k < pa.size() && match; ++k)
      match = support[s][static_cast<std::size_t>(pa[k] - 1)] == parent_values[k];
    if (!match) continue;
    m.points.push_back(support[s][static_cast<std::size_t>(node - 1)]);
    m.probs.push_back(probs[s]);
  }
  if (m.points.empty()) return m;
  m = canonical(std::move(m));
  const double total = std::accumulate(m.probs.begin(), m.probs.end(), 0.0);
  for (double& p : m.probs) p /= total;
  return m;
}

Measure1d DiscreteMeasure::marginal(int node) const {
  if (node < 1 || node > dag.size()) throw InvalidArgument("marginal: node out of range");
  Measure1d m;
  for (std::size_t s = 0; s < support.size(); ++s) {
    m.points.push_back(support[s][static_cast<std::size_t>(node - 1)]);
    m.probs.push_back(probs[s]);
  }
  return canonical(std::move(m));
}

double DiscreteMeasure::prob_of(std::span<const double> point) const {
  for (std::size_t s = 0; s < support.size(); ++s)
    if (std::equal(point.begin(), point.end(), support[s].begin(), support[s].end())) return probs[s];
  return 0.0;
}

DiscreteMeasure DiscreteMeasure::from_kernels(const Dag& dag, const std::vector<std::vector<double>>& values,
                                              const Kernel& kernel) {
  const auto d = static_cast<std::size_t>(dag.size());
  if (values.size() != d) throw InvalidArgument("from_kernels: one value grid per node required");
  for (const auto& v : values)
    if (v.empty()) throw InvalidArgument("from_kernels: empty value grid");
  DiscreteMeasure mu;
  mu.dag = dag;
  std::vector<double> point(d);
  std::function<void(std::size_t, double)> rec = [&](std::size_t i, double p) {
    if (i == d) {
      mu.support.push_back(point);
      mu.probs.push_back(p);
      return;
    }
    const int node = static_cast<int>(i) + 1;
    const auto& pa = dag.parents(node);
    std::vector<double> pv;
    for (int q : pa) pv.push_back(point[static_cast<std::size_t>(q - 1)]);
    const auto w = kernel(node, pv);
    if (w.size() != values[i].size()) throw InvalidArgument("from_kernels: kernel returned wrong size");
    double total = 0.0;
    for (double x : w) {
      if (!(x >= 0.0)) throw InvalidArgument("from_kernels: negative kernel weight");
      total += x;
    }
    if (std::abs(total - 1.0) > 1e-12) throw InvalidArgument("from_kernels: kernel weights do not sum to 1");
    for (std::size_t k = 0; k < w.size(); ++k) {
      if (!(w[k] > 0.0)) continue;
      point[i] = values[i][k];
      rec(i + 1, p * w[k]);
    }
  };
  rec(0, 1.0);
  // Renormalize away rounding in the products.
  const double total = std::accumulate(mu.probs.begin(), mu.probs.end(), 0.0);
  for (double& p : mu.probs) p /= total;
  mu.validate();
  return mu;
}

nlohmann::json to_json(const DiscreteMeasure& mu) {
  return {{"support", mu.support}, {"probs", mu.probs}, {"dag", to_json(mu.dag)}};
}

DiscreteMeasure discrete_measure_from_json(const nlohmann::json& j) {
  try {
    DiscreteMeasure mu;
    mu.dag = dag_from_json(j.at("dag"));
    mu.support = j.at("support").get<std::vector<std::vector<double>>>();
    mu.probs = j.at("probs").get<std::vector<double>>();
    mu.validate();
    return mu;
  } catch (const nlohmann::json::exception& ex) {
    throw InvalidArgument(std::string("DiscreteMeasure json: ") + ex.what());
  }
}

double w1_1d(const Measure1d& a, const Measure1d& b) {
  a.validate();
  b.validate();
  const auto ca = canonical(a);
  const auto cb = canonical(b);
  const double ta = std::accumulate(ca.probs.begin(), ca.probs.end(), 0.0);
  const double tb = std::accumulate(cb.probs.begin(), cb.probs.end(), 0.0);
  // Walk both quantile functions over the merged breakpoints of u.
  std::size_t i = 0, j = 0;
  double ra = ca.probs[0] / ta, rb = cb.probs[0] / tb;
  double acc = 0.0;
  while (i < ca.points.size() && j < cb.points.size()) {
    const double step = std::min(ra, rb);
    acc += step * std::abs(ca.points[i] - cb.points[j]);
    ra -= step;
    rb -= step;
    if (ra <= 1e-15) {
      if (++i < ca.points.size()) ra += ca.probs[i] / ta;
    }
    if (rb <= 1e-15) {
      if (++j < cb.points.size()) rb += cb.probs[j] / tb;
    }
  }
  return acc;
}

double wg_product(const std::vector<Measure1d>& mus, const std::vector<Measure1d>& nus) {
  if (mus.size() != nus.size() || mus.empty()) throw InvalidArgument("wg_product: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < mus.size(); ++i) s += w1_1d(mus[i], nus[i]);
  return s;
}

double w1_discrete(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  check_same_space(mu, nu, "w1_discrete");
  Eigen::MatrixXd cost(static_cast<Eigen::Index>(mu.support.size()), static_cast<Eigen::Index>(nu.support.size()));
  for (std::size_t k = 0; k < mu.support.size(); ++k) {
    for (std::size_t l = 0; l < nu.support.size(); ++l) {
      double c = 0.0;
      for (std::size_t i = 0; i < mu.support[k].size(); ++i) c += std::abs(mu.support[k][i] - nu.support[l][i]);
      cost(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l)) = c;
    }
  }
  return optimal_transport(mu.probs, nu.probs, cost).cost;
}

NestedResult wg_nested_discrete_detailed(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                         const NestedOptions& options) {
  check_same_space(mu, nu, "wg_nested_discrete");
  return NestedSolver(mu, nu, options).run();
}

double wg_nested_discrete(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  return wg_nested_discrete_detailed(mu, nu).value;
}

SharedNoiseEstimate wg_shared_noise_upper(const LinearGaussianScm& scm, const FlowModel& model,
                                          std::size_t n, std::uint64_t seed) {
  if (!(scm.dag == model.dag())) throw InvalidArgument("wg_shared_noise_upper: DAG mismatch");
  if (n == 0) throw InvalidArgument("wg_shared_noise_upper: n must be positive");
  constexpr std::size_t kChunks = 8;
  const auto d = static_cast<std::size_t>(scm.size());
  std::vector<double> s2(kChunks, 0.0), q2(kChunks, 0.0), s1(kChunks, 0.0);
  parallel_for(kChunks, [&](std::size_t c) {
    Rng rng(derive_seed(seed, "shared-noise", c));
    std::vector<double> u(d), z(d);
    for (std::size_t r = n * c / kChunks; r < n * (c + 1) / kChunks; ++r) {
      for (std::size_t i = 0; i < d; ++i) {
        u[i] = rng.uniform_open();
        z[i] = normal_quantile(u[i]);
      }
      const auto t = true_transport(scm, u);
      const auto th = model.forward(z);
      double e2 = 0.0, e1 = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        e2 += (t[i] - th[i]) * (t[i] - th[i]);
        e1 += std::abs(t[i] - th[i]);
      }
      const double e = std::sqrt(e2);
      s2[c] += e;
      q2[c] += e * e;
      s1[c] += e1;
    }
  });
  const double nn = static_cast<double>(n);
  const double mean = std::accumulate(s2.begin(), s2.end(), 0.0) / nn;
  const double sq = std::accumulate(q2.begin(), q2.end(), 0.0) / nn;
  SharedNoiseEstimate out;
  out.euclidean = mean;
  out.stderr_euclidean = n > 1 ? std::sqrt(std::max(0.0, sq - mean * mean) * nn / (nn - 1.0) / nn) : 0.0;
  out.l1 = std::accumulate(s1.begin(), s1.end(), 0.0) / nn;
  return out;
}

double tv_discrete(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  check_same_space(mu, nu, "tv_discrete");
  auto p = as_map(mu);
  const auto q = as_map(nu);
  for (const auto& [k, v] : q) p.try_emplace(k, 0.0);
  double s = 0.0;
  for (const auto& [k, v] : p) {
    const auto it = q.find(k);
    s += std::abs(v - (it == q.end() ? 0.0 : it->second));
  }
  return 0.5 * s;
}

double kl_discrete(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  check_same_space(mu, nu, "kl_discrete");
  const auto p = as_map(mu);
  const auto q = as_map(nu);
  double s = 0.0;
  for (const auto& [k, v] : p) {
    if (!(v > 0.0)) continue;
    const auto it = q.find(k);
    const double w = it == q.end() ? 0.0 : it->second;
    if (!(w > 0.0)) return std::numeric_limits<double>::infinity();
    s += v * std::log(v / w);
  }
  return std::max(0.0, s);
}

double kl_gaussian(const Eigen::VectorXd& m1, const Eigen::MatrixXd& s1, const Eigen::VectorXd& m2,
                   const Eigen::MatrixXd& s2) {
  const auto d = m1.size();
  if (m2.size() != d || s1.rows() != d || s1.cols() != d || s2.rows() != d || s2.cols() != d) {
    throw InvalidArgument("kl_gaussian: dimension mismatch");
  }
  const Eigen::LLT<Eigen::MatrixXd> l1(s1), l2(s2);
  if (l1.info() != Eigen::Success || l2.info() != Eigen::Success || !s1.isApprox(s1.transpose()) ||
      !s2.isApprox(s2.transpose())) {
    throw InvalidArgument("kl_gaussian: covariance is not symmetric positive definite");
  }
  const Eigen::VectorXd diff = m2 - m1;
  const double trace = l2.solve(s1).trace();
  const double quad = diff.dot(l2.solve(diff));
  const double logdet1 = 2.0 * l1.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double logdet2 = 2.0 * l2.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return 0.5 * (trace + quad - static_cast<double>(d) + logdet2 - logdet1);
}

double l1_diameter(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  std::vector<const std::vector<double>*> pts;
  for (const auto& p : mu.support) pts.push_back(&p);
  for (const auto& p : nu.support) pts.push_back(&p);
  double best = 0.0;
  for (std::size_t a = 0; a < pts.size(); ++a) {
    for (std::size_t b = a + 1; b < pts.size(); ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < pts[a]->size(); ++i) s += std::abs((*pts[a])[i] - (*pts[b])[i]);
      best = std::max(best, s);
    }
  }
  return best;
}

}  // namespace causalflow
