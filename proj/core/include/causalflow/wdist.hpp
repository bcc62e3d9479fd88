#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "causalflow/flow.hpp"
#include "causalflow/graph.hpp"
#include "causalflow/scm.hpp"

namespace causalflow {

// Weighted 1-D point set.
struct Measure1d {
  std::vector<double> points;
  std::vector<double> probs;

  static Measure1d empirical(std::span<const double> samples);
  void validate() const;
};

// Finite G-compatible measure on R^d.
struct DiscreteMeasure {
  Dag dag;
  std::vector<std::vector<double>> support;
  std::vector<double> probs;

  int dimension() const { return dag.size(); }
  // Throws unless shapes agree, probs >= 0 sum to 1 (1e-12) and points are
  // distinct.
  void validate() const;

  // Conditional law of coordinate `node` given the values of its parents
  // (ordered like dag.parents(node)); empty if the parent values have no
  // mass.
  Measure1d conditional(int node, std::span<const double> parent_values) const;
  Measure1d marginal(int node) const;
  double prob_of(std::span<const double> point) const;

  // Product of conditional kernels over the grid of candidate values per
  // node. kernel(node, parent_values) returns weights over values[node-1].
  using Kernel = std::function<std::vector<double>(int node, std::span<const double> parent_values)>;
  static DiscreteMeasure from_kernels(const Dag& dag, const std::vector<std::vector<double>>& values,
                                      const Kernel& kernel);
};

nlohmann::json to_json(const DiscreteMeasure& mu);
DiscreteMeasure discrete_measure_from_json(const nlohmann::json& j);

// W1 between 1-D measures: integral over u of |F_a^{-1}(u) - F_b^{-1}(u)|.
double w1_1d(const Measure1d& a, const Measure1d& b);

// Sum of coordinatewise w1_1d; the G-causal distance between product
// measures on the empty DAG under the l1 ground cost.
double wg_product(const std::vector<Measure1d>& mus, const std::vector<Measure1d>& nus);

// Plain Wasserstein-1 between discrete measures under the l1 ground cost
// (no causality constraint).
double w1_discrete(const DiscreteMeasure& mu, const DiscreteMeasure& nu);

struct NestedResult {
  double value = 0.0;      // l1 cost of the composed bicausal coupling
  bool exact = false;      // dag is a forest, so value is the G-causal distance
  std::size_t subproblems = 0;
};

struct NestedOptions {
  std::size_t max_subproblems = 10000;
  std::size_t max_states = 2000000;
};

// Backward induction over conditional transport problems under l1 cost.
// Single-parent nodes are folded into their parent's cost (exact on
// forests); roots and multi-parent nodes get optimal conditional couplings
// per pair of parent configurations. The returned value is the exact cost
// of the composed coupling, summed in a forward pass. Throws InvalidArgument
// on DAG mismatch and ConfigError when the limits are exceeded.
NestedResult wg_nested_discrete_detailed(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                         const NestedOptions& options = {});
double wg_nested_discrete(const DiscreteMeasure& mu, const DiscreteMeasure& nu);

struct SharedNoiseEstimate {
  double euclidean = 0.0;  // mean ||T(u) - T_hat(u)||_2
  double stderr_euclidean = 0.0;
  double l1 = 0.0;  // mean ||T(u) - T_hat(u)||_1
};

// Couples the SCM and the model through common uniforms: T(u) is the true
// conditional-quantile transport, T_hat(u) = model.forward(Phi^{-1}(u)).
// The mean distance upper-bounds the G-causal distance.
SharedNoiseEstimate wg_shared_noise_upper(const LinearGaussianScm& scm, const FlowModel& model,
                                          std::size_t n, std::uint64_t seed);

// 1/2 sum |p - q| over the union of supports.
double tv_discrete(const DiscreteMeasure& mu, const DiscreteMeasure& nu);
// sum p log(p / q); 0 log 0 = 0 and +inf when q = 0 < p.
double kl_discrete(const DiscreteMeasure& mu, const DiscreteMeasure& nu);
// KL(N(m1, S1) || N(m2, S2)). Throws InvalidArgument unless both are SPD.
double kl_gaussian(const Eigen::VectorXd& m1, const Eigen::MatrixXd& s1, const Eigen::VectorXd& m2,
                   const Eigen::MatrixXd& s2);

// Largest l1 distance between two support points of either measure.
double l1_diameter(const DiscreteMeasure& mu, const DiscreteMeasure& nu);

}  // namespace causalflow
