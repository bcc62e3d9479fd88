#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. Nothing here shares code with the library beyond the data types.

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "causalflow/graph.hpp"
#include "causalflow/wdist.hpp"

namespace oracle {

// min c'x  s.t.  A x = b, x >= 0. Dense two-phase tableau simplex with
// Bland's rule. Throws std::runtime_error when infeasible or unbounded.
struct LpResult {
  double value = 0.0;
  Eigen::VectorXd x;
};
LpResult solve_lp(const Eigen::VectorXd& c, const Eigen::MatrixXd& a, const Eigen::VectorXd& b);

// Plain W1 under the l1 ground cost over every coupling of mu and nu.
double coupling_w1(const causalflow::DiscreteMeasure& mu, const causalflow::DiscreteMeasure& nu);

// G-bicausal transport cost under l1 for d <= 2 (empty DAG, chain 1 -> 2,
// or d = 1). Causality enters as linear conditional-independence
// constraints on the joint coupling.
double bicausal_lp(const causalflow::DiscreteMeasure& mu, const causalflow::DiscreteMeasure& nu);

// sup |F_n - F| for the empirical cdf of `samples`.
double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf);

// Central differences of f at x with step h.
std::vector<double> central_gradient(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> x, double h);

// Builds the quotient graph and looks for a cycle by depth-first search.
bool quotient_acyclic(const causalflow::Dag& dag, const causalflow::TargetSet& targets);

// Boundary-term gradient of an IncrMLP pushforward, term by term over the
// 2n kinks. theta laid out [w1, b1, w2, b2].
std::vector<double> kink_boundary_gradient(std::span<const double> theta, double alpha);

}  // namespace oracle
