#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "causalflow/dataset.hpp"
#include "causalflow/diff.hpp"
#include "causalflow/graph.hpp"
#include "causalflow/incr_mlp.hpp"

namespace causalflow {

// How base noise enters the first layer.
//  kGaussian:          z ~ N(0, I) is fed to the layers directly; every
//                      conditional has full support on R.
//  kGaussianQuantile:  u = Phi(z) is fed to the layers, which makes the model
//                      the pushforward of Uniform((0,1)^d) and gives each
//                      conditional bounded support g((0, 1)).
enum class BaseKind { kGaussian, kGaussianQuantile };

std::string to_string(BaseKind kind);
BaseKind base_kind_from_string(const std::string& s);

struct FlowConfig {
  int width = 16;                 // IncrMLP hidden neurons n
  double alpha = 0.3;             // activation parameter in (0, 1)
  std::vector<int> hidden = {64, 64};  // hypernetwork hidden layer sizes
  BaseKind base = BaseKind::kGaussian;
  double positivity_floor = 1e-6;  // w = |raw| + floor
  double head_init_scale = 0.01;   // scale of the hypernetwork output weights at init

  void validate() const;
};

struct InverseResult {
  std::vector<double> z;
  // Set when some coordinate reached the far tail: |z| > 8 for the Gaussian
  // base, or u clamped into [1e-15, 1 - 1e-15] for the quantile base.
  bool clamped = false;
};

// G-causal normalizing flow: one hypercoupling layer per vertex, applied in
// vertex order. Layer k rewrites coordinate k with an IncrMLP whose
// parameters are produced by a hypernetwork of the (already transformed)
// parent coordinates; root vertices use a constant parameter block.
//
// A fixed per-coordinate affine map x = shift + scale * y sits after the
// layers (identity unless set); it is diagonal and so preserves the DAG
// structure.
class FlowModel {
 public:
  FlowModel() = default;
  FlowModel(Dag dag, FlowConfig config, std::uint64_t seed);

  const Dag& dag() const { return dag_; }
  const FlowConfig& config() const { return config_; }
  int size() const { return dag_.size(); }

  ad::ParamVector& params() { return params_; }
  const ad::ParamVector& params() const { return params_; }

  const std::vector<double>& shift() const { return shift_; }
  const std::vector<double>& scale() const { return scale_; }
  void set_standardization(std::vector<double> shift, std::vector<double> scale);

  // IncrMLP parameters of layer k given flow-space coordinates y (only
  // y_PA(k) is read).
  IncrMlpParams layer_params(int k, std::span<const double> y) const;
  // Applies layer k to a flow-space vector.
  std::vector<double> layer_forward(std::span<const double> y, int k) const;

  // Base noise -> data.
  std::vector<double> forward(std::span<const double> z) const;
  // Data -> base noise.
  InverseResult inverse(std::span<const double> x) const;
  // log density of the model at x; -inf outside the support of the quantile
  // base. `flagged` receives the clamping flag of the inverse pass.
  double log_pdf(std::span<const double> x, bool* flagged = nullptr) const;

  // log_pdf of rows [begin, end) of `data`, hypernetworks evaluated as
  // matrix products over the block.
  std::vector<double> log_pdf_rows(const Dataset& data, std::size_t begin, std::size_t end) const;

  // Records log p(x) on `tape`. `params` must be leaves on the same tape
  // holding params().values() in order.
  //
  // The density is discontinuous in y at the images g(kink) of the IncrMLP
  // breakpoints, so the per-sample gradient misses the mass that crosses a
  // moving kink. With `kink_correction` an extra node of value 0 is added
  // whose gradient supplies that boundary term, with the model's own density
  // at each kink standing in for the data density. Averaged over data this
  // is the gradient of the expected log-likelihood when model and data agree.
  ad::Var log_pdf_tape(ad::Tape& tape, ad::VarRange params, std::span<const double> x,
                       bool kink_correction = false) const;

  // Adds d/dtheta of sum_r log p(data.row(r)) over `rows` into `grad` and
  // returns the summed log density. Same result as log_pdf_tape per row, but
  // hypernetwork layers run as matrix products over the whole row set.
  double log_pdf_gradient(const Dataset& data, std::span<const std::size_t> rows,
                          std::span<double> grad, bool kink_correction = false) const;

  bool operator==(const FlowModel& other) const;

 private:
  struct DenseLayer {
    std::size_t w_offset = 0;
    std::size_t b_offset = 0;
    int in = 0;
    int out = 0;
  };
  struct NodeNet {
    std::vector<int> parents;
    std::size_t theta_offset = 0;  // roots only
    std::vector<DenseLayer> layers;
  };

  std::size_t theta_size() const { return 3 * static_cast<std::size_t>(config_.width) + 1; }
  void raw_theta(int k, std::span<const double> y, std::span<double> out) const;
  IncrMlpParams constrain(std::span<const double> raw) const;
  // log phi(z_k) - log g'(z_k) for one coordinate, from raw hypernet outputs.
  ad::Var node_term(ad::Tape& tape, std::span<const ad::Var> raw, double yk, bool kink_correction) const;
  void build_layout(std::uint64_t seed);

  Dag dag_;
  FlowConfig config_;
  ad::ParamVector params_;
  std::vector<NodeNet> nets_;
  std::vector<double> shift_;
  std::vector<double> scale_;
};

// n iid draws of forward(z), z ~ N(0, I).
Dataset sample(const FlowModel& model, std::size_t n, std::uint64_t seed);

// Complete sorted DAG: the non-causal baseline architecture.
Dag dense_baseline_dag(int d);

nlohmann::json to_json(const FlowModel& model);
FlowModel flow_from_json(const nlohmann::json& j);

}  // namespace causalflow
