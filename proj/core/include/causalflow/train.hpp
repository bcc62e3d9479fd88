#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "causalflow/dataset.hpp"
#include "causalflow/flow.hpp"

namespace causalflow {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 256;
  int max_epochs = 200;
  int patience = 20;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
  double grad_clip = 10.0;  // global gradient norm
  // Fit the fixed per-coordinate affine layer to the training split's
  // mean and standard deviation before optimizing.
  bool standardize = true;
  // Add the moving-kink boundary term to minibatch gradients (see
  // FlowModel::log_pdf_tape).
  bool kink_correction = true;

  void validate() const;
};

struct TrainReport {
  // Row e is the state after e epochs; row 0 is the initial model.
  std::vector<double> train_nll;
  std::vector<double> val_nll;
  int best_epoch = 0;
  std::uint64_t checksum = 0;  // of the returned parameters
  double wall_seconds = 0.0;

  int epochs() const { return static_cast<int>(val_nll.size()) - 1; }
};

struct TrainResult {
  FlowModel model;
  TrainReport report;
};

// Called after every epoch with the epoch number, the current parameters and
// the best-validation parameters so far.
using EpochCallback = std::function<void(int epoch, const FlowModel& current, const FlowModel& best)>;

// Mean negative log-likelihood. Throws EvaluationError carrying the row
// index when some log density is not finite.
double nll(const FlowModel& model, const Dataset& batch);

// Gradient of nll with respect to model.params() on the given rows, plus the
// loss value. Without kink correction this is the exact derivative of the
// sample loss.
double nll_gradient(const FlowModel& model, const Dataset& data, std::span<const std::size_t> rows,
                    std::span<double> grad, bool kink_correction = false);

// Adam with bias correction.
class Adam {
 public:
  Adam(std::size_t size, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  void step(std::span<double> params, std::span<const double> grad);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  int t_ = 0;
};

TrainResult train(FlowModel model, const Dataset& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

// FNV-1a over the parameter bytes.
std::uint64_t parameter_checksum(const FlowModel& model);

// Columns epoch, train_nll, val_nll.
void write_report_csv(std::ostream& out, const TrainReport& report);

}  // namespace causalflow
