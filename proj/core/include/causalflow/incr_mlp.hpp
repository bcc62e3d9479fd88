#pragma once

#include <span>
#include <vector>

#include "causalflow/diff.hpp"

namespace causalflow {

// Parameters of g(x) = sum_i w2_i rho(w1_i x + b1_i) + b2 with w1, w2 > 0.
// g is continuous, piecewise linear and strictly increasing.
struct IncrMlpParams {
  std::vector<double> w1;
  std::vector<double> b1;
  std::vector<double> w2;
  double b2 = 0.0;
  double alpha = 0.3;

  std::size_t width() const { return w1.size(); }
  // Throws InvalidArgument unless shapes agree, w1, w2 > 0, alpha in (0, 1).
  void validate() const;
  // Flat layout [w1, b1, w2, b2].
  std::vector<double> flatten() const;
  static IncrMlpParams unflatten(std::span<const double> flat, double alpha);
};

double g_forward(double x, const IncrMlpParams& theta);
double g_dx(double x, const IncrMlpParams& theta);
// Exact inverse by locating the linear segment containing y.
double g_inverse(double y, const IncrMlpParams& theta);
// Sorted kink locations (+-1 - b1_i) / w1_i.
std::vector<double> g_breakpoints(const IncrMlpParams& theta);
// Lower bound (alpha / 2) sum_i w2_i w1_i on the slope.
double g_min_slope(const IncrMlpParams& theta);

// Tape versions. theta is laid out as [w1 (n), b1 (n), w2 (n), b2].
ad::Var g_forward_tape(ad::Tape& tape, ad::Var x, std::span<const ad::Var> theta, double alpha);
// log g'(x); the slope pattern is piecewise constant in x so only theta
// receives gradient.
ad::Var g_log_dx_tape(ad::Tape& tape, double x, std::span<const ad::Var> theta, double alpha);
// x = g^{-1}(y) as an implicit-function node over theta and y.
ad::Var g_inverse_tape(ad::Tape& tape, ad::Var y, std::span<const ad::Var> theta, double alpha);

// Node of value 0 whose gradient is -sum_b c_b dy_b/dtheta over the kinks
// z_b of g, with y_b = g(z_b) and c_b = p(y_b-) - p(y_b+), p being the
// density of g pushed from N(0, 1) (or from Uniform(0, 1) with
// `uniform_base`). Adding it to a log density recovers the boundary term of
// the expected-loss gradient that the pointwise gradient misses.
ad::Var g_kink_boundary_tape(ad::Tape& tape, std::span<const ad::Var> theta, double alpha,
                             bool uniform_base);

}  // namespace causalflow
