#include "causalflow/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <numeric>
#include <ostream>

#include "causalflow/error.hpp"
#include "causalflow/parallel.hpp"
#include "causalflow/rng.hpp"

namespace causalflow {

namespace {

// Rows are reduced in this many fixed chunks so the floating-point sum does
// not depend on the worker count.
constexpr std::size_t kChunks = 8;

std::size_t chunk_begin(std::size_t n, std::size_t c) { return n * c / kChunks; }

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidArgument("TrainConfig: learning_rate must be > 0");
  if (batch_size == 0) throw InvalidArgument("TrainConfig: batch_size must be > 0");
  if (max_epochs < 0) throw InvalidArgument("TrainConfig: max_epochs must be >= 0");
  if (patience < 1) throw InvalidArgument("TrainConfig: patience must be >= 1");
  if (!(val_fraction > 0.0 && val_fraction <= 0.5)) {
    throw InvalidArgument("TrainConfig: val_fraction outside (0, 0.5]");
  }
  if (!(grad_clip > 0.0)) throw InvalidArgument("TrainConfig: grad_clip must be > 0");
}

double nll(const FlowModel& model, const Dataset& batch) {
  if (batch.rows() == 0) throw InvalidArgument("nll: empty batch");
  if (batch.cols() != static_cast<std::size_t>(model.size())) {
    throw InvalidArgument("nll: dimension mismatch");
  }
  const std::size_t n = batch.rows();
  std::vector<double> partial(kChunks, 0.0);
  std::vector<std::size_t> bad(kChunks, n);
  parallel_for(kChunks, [&](std::size_t c) {
    double s = 0.0;
    const std::size_t lo = chunk_begin(n, c);
    const auto lps = model.log_pdf_rows(batch, lo, chunk_begin(n, c + 1));
    for (std::size_t r = 0; r < lps.size(); ++r) {
      if (!std::isfinite(lps[r])) {
        bad[c] = lo + r;
        return;
      }
      s += lps[r];
    }
    partial[c] = s;
  });
  for (std::size_t c = 0; c < kChunks; ++c)
    if (bad[c] < n) throw EvaluationError("nll: log density is not finite", bad[c]);
  return -std::accumulate(partial.begin(), partial.end(), 0.0) / static_cast<double>(n);
}

double nll_gradient(const FlowModel& model, const Dataset& data, std::span<const std::size_t> rows,
                    std::span<double> grad, bool kink_correction) {
  const std::size_t P = model.params().size();
  if (grad.size() != P) throw InvalidArgument("nll_gradient: gradient size mismatch");
  if (rows.empty()) throw InvalidArgument("nll_gradient: no rows");
  const std::size_t n = rows.size();
  std::vector<std::vector<double>> partial_grad(kChunks);
  std::vector<double> partial_loss(kChunks, 0.0);
  std::vector<std::size_t> bad(kChunks, data.rows());
  parallel_for(kChunks, [&](std::size_t c) {
    auto& acc = partial_grad[c];
    acc.assign(P, 0.0);
    const std::size_t lo = chunk_begin(n, c), hi = chunk_begin(n, c + 1);
    try {
      partial_loss[c] = -model.log_pdf_gradient(data, rows.subspan(lo, hi - lo), acc, kink_correction);
    } catch (const EvaluationError& ex) {
      bad[c] = ex.where();
    }
  });
  for (std::size_t c = 0; c < kChunks; ++c)
    if (bad[c] < data.rows()) throw EvaluationError("nll_gradient: log density is not finite", bad[c]);
  std::fill(grad.begin(), grad.end(), 0.0);
  double loss = 0.0;
  for (std::size_t c = 0; c < kChunks; ++c) {
    loss += partial_loss[c];
    for (std::size_t j = 0; j < P; ++j) grad[j] -= partial_grad[c][j];
  }
  const double inv = 1.0 / static_cast<double>(n);
  for (double& g : grad) g *= inv;
  return loss * inv;
}

Adam::Adam(std::size_t size, double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps), m_(size, 0.0), v_(size, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw InvalidArgument("Adam::step: size mismatch");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t j = 0; j < m_.size(); ++j) {
    m_[j] = beta1_ * m_[j] + (1.0 - beta1_) * grad[j];
    v_[j] = beta2_ * v_[j] + (1.0 - beta2_) * grad[j] * grad[j];
    params[j] -= lr_ * (m_[j] / c1) / (std::sqrt(v_[j] / c2) + eps_);
  }
}

std::uint64_t parameter_checksum(const FlowModel& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::span<const double> values) {
    for (double v : values) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof(double));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
      }
    }
  };
  feed(model.params().values());
  feed(model.shift());
  feed(model.scale());
  return h;
}

TrainResult train(FlowModel model, const Dataset& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  if (data.cols() != static_cast<std::size_t>(model.size())) {
    throw InvalidArgument("train: dimension mismatch");
  }
  if (data.rows() < 2 * cfg.batch_size) {
    throw InvalidArgument("train: need at least 2 * batch_size rows");
  }
  const std::size_t N = data.rows();
  const std::size_t d = data.cols();

  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng(derive_seed(cfg.seed, "train.split"));
  std::shuffle(order.begin(), order.end(), split_rng);
  const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.val_fraction * N)));
  const std::vector<std::size_t> val_rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_rows(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(train_rows.begin(), train_rows.end());
  const Dataset val = data.select_rows(val_rows);
  const Dataset train_set = data.select_rows(train_rows);

  if (cfg.standardize && cfg.max_epochs > 0) {
    std::vector<double> mean(d, 0.0), sd(d, 0.0);
    for (std::size_t r = 0; r < train_set.rows(); ++r)
      for (std::size_t j = 0; j < d; ++j) mean[j] += train_set(r, j);
    for (double& m : mean) m /= static_cast<double>(train_set.rows());
    for (std::size_t r = 0; r < train_set.rows(); ++r)
      for (std::size_t j = 0; j < d; ++j) sd[j] += (train_set(r, j) - mean[j]) * (train_set(r, j) - mean[j]);
    for (double& s : sd) {
      s = std::sqrt(s / static_cast<double>(train_set.rows() - 1));
      if (!(s > 1e-12)) s = 1.0;
    }
    model.set_standardization(mean, sd);
  }

  TrainReport report;
  auto guarded_nll = [](const FlowModel& m, const Dataset& x) {
    try {
      return nll(m, x);
    } catch (const EvaluationError& ex) {
      throw DivergenceError(std::string("training diverged: ") + ex.what());
    }
  };
  report.train_nll.push_back(guarded_nll(model, train_set));
  report.val_nll.push_back(guarded_nll(model, val));
  FlowModel best = model;
  double best_val = report.val_nll.back();

  const std::size_t P = model.params().size();
  Adam adam(P, cfg.learning_rate);
  std::vector<double> grad(P);
  std::vector<std::size_t> perm(train_set.rows());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  int since_best = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, "train.shuffle", static_cast<std::uint64_t>(epoch)));
    std::shuffle(perm.begin(), perm.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < perm.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(perm.size(), b + cfg.batch_size);
      const std::span<const std::size_t> rows(perm.data() + b, e - b);
      double loss = 0.0;
      try {
        loss = nll_gradient(model, train_set, rows, grad, cfg.kink_correction);
      } catch (const EvaluationError& ex) {
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + ": " + ex.what());
      }
      double norm2 = 0.0;
      for (double g : grad) norm2 += g * g;
      if (!std::isfinite(loss) || !std::isfinite(norm2)) {
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) +
                              ": non-finite loss or gradient");
      }
      const double norm = std::sqrt(norm2);
      if (norm > cfg.grad_clip)
        for (double& g : grad) g *= cfg.grad_clip / norm;
      adam.step(model.params().values(), grad);
      epoch_loss += loss * static_cast<double>(e - b);
    }
    report.train_nll.push_back(epoch_loss / static_cast<double>(perm.size()));
    report.val_nll.push_back(guarded_nll(model, val));
    if (report.val_nll.back() < best_val) {
      best_val = report.val_nll.back();
      best = model;
      report.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (on_epoch) on_epoch(epoch, model, best);
    if (since_best >= cfg.patience) break;
  }
  report.checksum = parameter_checksum(best);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(best), std::move(report)};
}

void write_report_csv(std::ostream& out, const TrainReport& report) {
  out << "epoch,train_nll,val_nll\n";
  for (std::size_t e = 0; e < report.val_nll.size(); ++e) {
    out << e << ',' << format_double(report.train_nll[e]) << ',' << format_double(report.val_nll[e])
        << '\n';
  }
}

}  // namespace causalflow
