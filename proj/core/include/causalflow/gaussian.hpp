#pragma once

namespace causalflow {

// Standard normal density, log-density, cdf and quantile.
double normal_pdf(double x);
double normal_logpdf(double x);
double normal_cdf(double x);

// Inverse of normal_cdf on (0, 1). Rational initial guess refined by one
// Halley step; absolute error below 1e-12 over [1e-300, 1 - 1e-16].
// Throws InvalidArgument for p outside (0, 1).
double normal_quantile(double p);

}  // namespace causalflow
