#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "causalflow/dataset.hpp"
#include "causalflow/graph.hpp"

namespace causalflow {

// X_i = <w_i, X_PA(i)> + b_i + sigma_i * U_i with independent standard
// normal U_i. weights[i - 1] is ordered like dag.parents(i).
struct LinearGaussianScm {
  Dag dag;
  std::vector<std::vector<double>> weights;
  std::vector<double> bias;
  std::vector<double> noise_std;

  // Zero weights, zero bias, unit noise.
  static LinearGaussianScm independent(const Dag& dag);

  int size() const { return dag.size(); }
  // Throws InvalidArgument on shape mismatch or non-positive noise.
  void validate() const;
  // Strictly lower-triangular weight matrix W with W(j-1, i-1) = weight of i -> j.
  Eigen::MatrixXd weight_matrix() const;
  double mechanism_mean(int node, std::span<const double> parent_values) const;
};

// Soft intervention: node keeps its parents and noise but gets a new linear
// mechanism.
struct Intervention {
  int node = 0;
  std::vector<double> new_weights;
  double new_bias = 0.0;
  double strength = 0.0;
};

struct GaussianMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Weights iid Uniform(-1, 1), zero biases, unit noise.
LinearGaussianScm random_linear_scm(const Dag& dag, std::uint64_t seed);

// Ancestral sampling in vertex order.
Dataset sample(const LinearGaussianScm& scm, std::size_t n, std::uint64_t seed);

// mean = (I - W)^-1 b, cov = (I - W)^-1 D (I - W)^-T.
GaussianMoments analytic_moments(const LinearGaussianScm& scm);

LinearGaussianScm intervene(const LinearGaussianScm& scm, const Intervention& iv);

// Expected |f - f~| under the pre-intervention parent law. With additive
// shared noise this is the mean of a folded normal.
double interventional_strength(const LinearGaussianScm& scm, const Intervention& iv);

// E|N(m, s^2)|.
double folded_normal_mean(double m, double s);

// F_i^{-1}(u | x_pa). Throws InvalidArgument unless 0 < u < 1.
double conditional_quantile(const LinearGaussianScm& scm, int node, double u,
                            std::span<const double> parent_values);

// Composition of conditional quantile maps in vertex order; pushes
// Uniform((0,1)^d) forward to the SCM law.
std::vector<double> true_transport(const LinearGaussianScm& scm, std::span<const double> u);

// Differential entropy 1/2 log((2 pi e)^d det cov).
double gaussian_entropy(const Eigen::MatrixXd& cov);

nlohmann::json to_json(const LinearGaussianScm& scm);
LinearGaussianScm scm_from_json(const nlohmann::json& j);

}  // namespace causalflow
