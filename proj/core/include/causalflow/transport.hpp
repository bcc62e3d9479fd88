#pragma once

#include <span>

#include <Eigen/Core>

namespace causalflow {

struct TransportPlan {
  Eigen::MatrixXd plan;  // rows follow the source weights, columns the target
  double cost = 0.0;
};

// Discrete optimal transport  min <C, P>  over P >= 0 with row sums a and
// column sums b. Weights must be nonnegative with equal totals (1e-9).
//
// Problems with at most 4 source and 4 target points are solved by
// enumerating every basic feasible solution; among optimal plans the one
// whose set of positive cells is lexicographically smallest (row-major
// cell order) is returned. Larger problems use the transportation simplex
// with Bland's rule, which is deterministic but has no tie-break guarantee.
TransportPlan optimal_transport(std::span<const double> a, std::span<const double> b,
                                const Eigen::MatrixXd& cost);

TransportPlan transport_enumerate(std::span<const double> a, std::span<const double> b,
                                  const Eigen::MatrixXd& cost);
TransportPlan transport_simplex(std::span<const double> a, std::span<const double> b,
                                const Eigen::MatrixXd& cost);

}  // namespace causalflow
