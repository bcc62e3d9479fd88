#include "causalflow/scm.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "causalflow/error.hpp"
#include "causalflow/gaussian.hpp"
#include "causalflow/rng.hpp"

namespace causalflow {

namespace {

std::vector<double> gather(std::span<const double> x, std::span<const int> vertices) {
  std::vector<double> out;
  out.reserve(vertices.size());
  for (int v : vertices) out.push_back(x[static_cast<std::size_t>(v - 1)]);
  return out;
}

}  // namespace

LinearGaussianScm LinearGaussianScm::independent(const Dag& dag) {
  LinearGaussianScm scm{dag, {}, std::vector<double>(static_cast<std::size_t>(dag.size()), 0.0),
                        std::vector<double>(static_cast<std::size_t>(dag.size()), 1.0)};
  for (int i = 1; i <= dag.size(); ++i) scm.weights.emplace_back(dag.parents(i).size(), 0.0);
  return scm;
}

void LinearGaussianScm::validate() const {
  const auto d = static_cast<std::size_t>(dag.size());
  if (weights.size() != d || bias.size() != d || noise_std.size() != d) {
    throw InvalidArgument("LinearGaussianScm: per-node arrays must have length d");
  }
  for (int i = 1; i <= dag.size(); ++i) {
    const auto k = static_cast<std::size_t>(i - 1);
    if (weights[k].size() != dag.parents(i).size()) {
      throw InvalidArgument("LinearGaussianScm: weight count for node " + std::to_string(i) +
                            " does not match its parent count");
    }
    if (!(noise_std[k] > 0.0)) {
      throw InvalidArgument("LinearGaussianScm: noise_std must be positive");
    }
  }
}

Eigen::MatrixXd LinearGaussianScm::weight_matrix() const {
  const int d = dag.size();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(d, d);
  for (int j = 1; j <= d; ++j) {
    const auto pa = dag.parents(j);
    for (std::size_t k = 0; k < pa.size(); ++k) w(j - 1, pa[k] - 1) = weights[static_cast<std::size_t>(j - 1)][k];
  }
  return w;
}

double LinearGaussianScm::mechanism_mean(int node, std::span<const double> parent_values) const {
  const auto& w = weights[static_cast<std::size_t>(node - 1)];
  double m = bias[static_cast<std::size_t>(node - 1)];
  for (std::size_t k = 0; k < w.size(); ++k) m += w[k] * parent_values[k];
  return m;
}

LinearGaussianScm random_linear_scm(const Dag& dag, std::uint64_t seed) {
  Rng rng(seed);
  auto scm = LinearGaussianScm::independent(dag);
  for (auto& w : scm.weights)
    for (double& v : w) v = rng.uniform(-1.0, 1.0);
  return scm;
}

Dataset sample(const LinearGaussianScm& scm, std::size_t n, std::uint64_t seed) {
  scm.validate();
  const int d = scm.size();
  Dataset out(n, static_cast<std::size_t>(d));
  Rng rng(seed);
  std::vector<double> pa;
  for (std::size_t r = 0; r < n; ++r) {
    auto x = out.row(r);
    for (int i = 1; i <= d; ++i) {
      const auto parents = scm.dag.parents(i);
      pa.clear();
      for (int p : parents) pa.push_back(x[static_cast<std::size_t>(p - 1)]);
      x[static_cast<std::size_t>(i - 1)] =
          scm.mechanism_mean(i, pa) + scm.noise_std[static_cast<std::size_t>(i - 1)] * rng.normal();
    }
  }
  return out;
}

GaussianMoments analytic_moments(const LinearGaussianScm& scm) {
  scm.validate();
  const int d = scm.size();
  const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(d, d) - scm.weight_matrix();
  // Unit lower triangular: solve instead of inverting.
  const Eigen::MatrixXd inv =
      a.triangularView<Eigen::UnitLower>().solve(Eigen::MatrixXd::Identity(d, d));
  Eigen::VectorXd b(d), var(d);
  for (int i = 0; i < d; ++i) {
    b(i) = scm.bias[static_cast<std::size_t>(i)];
    var(i) = scm.noise_std[static_cast<std::size_t>(i)] * scm.noise_std[static_cast<std::size_t>(i)];
  }
  return {inv * b, inv * var.asDiagonal() * inv.transpose()};
}

LinearGaussianScm intervene(const LinearGaussianScm& scm, const Intervention& iv) {
  if (iv.node < 1 || iv.node > scm.size()) {
    throw InvalidArgument("intervene: node out of range");
  }
  if (iv.new_weights.size() != scm.dag.parents(iv.node).size()) {
    throw InvalidArgument("intervene: weight count does not match parent count of node " +
                          std::to_string(iv.node));
  }
  LinearGaussianScm out = scm;
  out.weights[static_cast<std::size_t>(iv.node - 1)] = iv.new_weights;
  out.bias[static_cast<std::size_t>(iv.node - 1)] = iv.new_bias;
  return out;
}

double folded_normal_mean(double m, double s) {
  if (s <= 0.0) return std::abs(m);
  return s * std::sqrt(2.0 / std::numbers::pi) * std::exp(-m * m / (2.0 * s * s)) +
         m * (1.0 - 2.0 * normal_cdf(-m / s));
}

double interventional_strength(const LinearGaussianScm& scm, const Intervention& iv) {
  if (iv.node < 1 || iv.node > scm.size()) {
    throw InvalidArgument("interventional_strength: node out of range");
  }
  const auto pa = scm.dag.parents(iv.node);
  const auto& w = scm.weights[static_cast<std::size_t>(iv.node - 1)];
  if (iv.new_weights.size() != pa.size()) {
    throw InvalidArgument("interventional_strength: weight count mismatch");
  }
  const auto moments = analytic_moments(scm);
  const auto k = pa.size();
  Eigen::VectorXd dw(static_cast<Eigen::Index>(k)), mean_pa(static_cast<Eigen::Index>(k));
  Eigen::MatrixXd cov_pa(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  for (std::size_t a = 0; a < k; ++a) {
    dw(static_cast<Eigen::Index>(a)) = iv.new_weights[a] - w[a];
    mean_pa(static_cast<Eigen::Index>(a)) = moments.mean(pa[a] - 1);
    for (std::size_t b = 0; b < k; ++b)
      cov_pa(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
          moments.cov(pa[a] - 1, pa[b] - 1);
  }
  const double m = dw.dot(mean_pa) + iv.new_bias - scm.bias[static_cast<std::size_t>(iv.node - 1)];
  const double var = k == 0 ? 0.0 : std::max(0.0, dw.dot(cov_pa * dw));
  return folded_normal_mean(m, std::sqrt(var));
}

double conditional_quantile(const LinearGaussianScm& scm, int node, double u,
                            std::span<const double> parent_values) {
  if (!(u > 0.0 && u < 1.0)) {
    throw InvalidArgument("conditional_quantile: u must lie in (0, 1)");
  }
  return scm.mechanism_mean(node, parent_values) +
         scm.noise_std[static_cast<std::size_t>(node - 1)] * normal_quantile(u);
}

std::vector<double> true_transport(const LinearGaussianScm& scm, std::span<const double> u) {
  const int d = scm.size();
  if (u.size() != static_cast<std::size_t>(d)) {
    throw InvalidArgument("true_transport: dimension mismatch");
  }
  std::vector<double> x(u.begin(), u.end());
  for (int i = 1; i <= d; ++i) {
    const auto pa = gather(x, scm.dag.parents(i));
    x[static_cast<std::size_t>(i - 1)] = conditional_quantile(scm, i, u[static_cast<std::size_t>(i - 1)], pa);
  }
  return x;
}

double gaussian_entropy(const Eigen::MatrixXd& cov) {
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw InvalidArgument("gaussian_entropy: covariance not SPD");
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < cov.rows(); ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
  const double d = static_cast<double>(cov.rows());
  return 0.5 * (d * std::log(2.0 * std::numbers::pi * std::numbers::e) + logdet);
}

nlohmann::json to_json(const LinearGaussianScm& scm) {
  return {{"dag", to_json(scm.dag)},
          {"weights", scm.weights},
          {"bias", scm.bias},
          {"noise_std", scm.noise_std}};
}

LinearGaussianScm scm_from_json(const nlohmann::json& j) {
  try {
    LinearGaussianScm scm{dag_from_json(j.at("dag")),
                          j.at("weights").get<std::vector<std::vector<double>>>(),
                          j.at("bias").get<std::vector<double>>(),
                          j.at("noise_std").get<std::vector<double>>()};
    scm.validate();
    return scm;
  } catch (const nlohmann::json::exception& ex) {
    throw InvalidArgument(std::string("scm json: ") + ex.what());
  }
}

}  // namespace causalflow
