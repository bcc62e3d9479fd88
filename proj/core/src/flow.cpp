#include "causalflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>

#include "causalflow/error.hpp"
#include "causalflow/gaussian.hpp"
#include "causalflow/rng.hpp"

namespace causalflow {

namespace {

constexpr double kTailZ = 8.0;
constexpr double kUClamp = 1e-15;

using ConstRowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

// Raw output layout that constrain() maps onto the identity-like start:
// w1 = 1, b1 spread over [-3, 3], w2 scaled for unit average slope on [-3, 3].
std::vector<double> initial_raw_theta(int n, double alpha) {
  std::vector<double> raw(3 * static_cast<std::size_t>(n) + 1, 0.0);
  double active = 0.0;
  for (int i = 0; i < n; ++i) {
    raw[static_cast<std::size_t>(i)] = 1.0;
    raw[static_cast<std::size_t>(n + i)] = n == 1 ? 0.0 : -3.0 + 6.0 * i / (n - 1);
  }
  // Average of rho'(x + b1_i) over x in [-3, 3], summed over neurons.
  constexpr int kGrid = 601;
  for (int g = 0; g < kGrid; ++g) {
    const double x = -3.0 + 6.0 * g / (kGrid - 1);
    for (int i = 0; i < n; ++i)
      active += ad::leaky_segments_slope(x + raw[static_cast<std::size_t>(n + i)], alpha);
  }
  const double w2 = 1.0 / (active / kGrid);
  for (int i = 0; i < n; ++i) raw[static_cast<std::size_t>(2 * n + i)] = w2;
  return raw;
}

}  // namespace

std::string to_string(BaseKind kind) {
  return kind == BaseKind::kGaussian ? "gaussian" : "gaussian_quantile";
}

BaseKind base_kind_from_string(const std::string& s) {
  if (s == "gaussian") return BaseKind::kGaussian;
  if (s == "gaussian_quantile") return BaseKind::kGaussianQuantile;
  throw InvalidArgument("unknown base kind: " + s);
}

void FlowConfig::validate() const {
  if (width < 1) throw InvalidArgument("FlowConfig: width must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("FlowConfig: alpha outside (0, 1)");
  for (int h : hidden)
    if (h < 1) throw InvalidArgument("FlowConfig: hidden sizes must be >= 1");
  if (!(positivity_floor > 0.0)) throw InvalidArgument("FlowConfig: positivity_floor must be > 0");
}

FlowModel::FlowModel(Dag dag, FlowConfig config, std::uint64_t seed)
    : dag_(std::move(dag)), config_(std::move(config)) {
  config_.validate();
  shift_.assign(static_cast<std::size_t>(dag_.size()), 0.0);
  scale_.assign(static_cast<std::size_t>(dag_.size()), 1.0);
  build_layout(seed);
}

void FlowModel::build_layout(std::uint64_t seed) {
  Rng rng(seed);
  const int n = config_.width;
  const auto init = initial_raw_theta(n, config_.alpha);
  nets_.assign(static_cast<std::size_t>(dag_.size()), {});
  for (int k = 1; k <= dag_.size(); ++k) {
    auto& net = nets_[static_cast<std::size_t>(k - 1)];
    net.parents.assign(dag_.parents(k).begin(), dag_.parents(k).end());
    const std::string prefix = "node" + std::to_string(k);
    if (net.parents.empty()) {
      net.theta_offset = params_.add(prefix + ".theta", theta_size());
      std::copy(init.begin(), init.end(), params_.slice(net.theta_offset, theta_size()).begin());
      continue;
    }
    int in = static_cast<int>(net.parents.size());
    std::vector<int> outs = config_.hidden;
    outs.push_back(static_cast<int>(theta_size()));
    for (std::size_t l = 0; l < outs.size(); ++l) {
      DenseLayer layer;
      layer.in = in;
      layer.out = outs[l];
      const std::string name = prefix + ".hyper" + std::to_string(l);
      layer.w_offset = params_.add(name + ".W", static_cast<std::size_t>(layer.in * layer.out));
      layer.b_offset = params_.add(name + ".b", static_cast<std::size_t>(layer.out));
      const bool head = l + 1 == outs.size();
      const double limit = std::sqrt(6.0 / (layer.in + layer.out)) * (head ? config_.head_init_scale : 1.0);
      for (double& w : params_.slice(layer.w_offset, static_cast<std::size_t>(layer.in * layer.out)))
        w = rng.uniform(-limit, limit);
      if (head) {
        std::copy(init.begin(), init.end(), params_.slice(layer.b_offset, theta_size()).begin());
      }
      net.layers.push_back(layer);
      in = layer.out;
    }
  }
  params_.validate_layout();
}

void FlowModel::set_standardization(std::vector<double> shift, std::vector<double> scale) {
  if (shift.size() != shift_.size() || scale.size() != scale_.size()) {
    throw InvalidArgument("set_standardization: dimension mismatch");
  }
  for (double s : scale)
    if (!(s > 0.0) || !std::isfinite(s)) throw InvalidArgument("set_standardization: scale must be positive");
  shift_ = std::move(shift);
  scale_ = std::move(scale);
}

void FlowModel::raw_theta(int k, std::span<const double> y, std::span<double> out) const {
  const auto& net = nets_[static_cast<std::size_t>(k - 1)];
  if (net.parents.empty()) {
    const auto src = params_.slice(net.theta_offset, theta_size());
    std::copy(src.begin(), src.end(), out.begin());
    return;
  }
  Eigen::VectorXd h(static_cast<Eigen::Index>(net.parents.size()));
  for (std::size_t i = 0; i < net.parents.size(); ++i)
    h(static_cast<Eigen::Index>(i)) = y[static_cast<std::size_t>(net.parents[i] - 1)];
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& L = net.layers[l];
    Eigen::VectorXd next =
        ConstRowMajorMap(params_.values().data() + L.w_offset, L.out, L.in) * h +
        ConstVecMap(params_.values().data() + L.b_offset, L.out);
    if (l + 1 < net.layers.size()) next = next.array().tanh();
    h = std::move(next);
  }
  std::copy(h.data(), h.data() + h.size(), out.begin());
}

IncrMlpParams FlowModel::constrain(std::span<const double> raw) const {
  const auto n = static_cast<std::size_t>(config_.width);
  IncrMlpParams p;
  p.alpha = config_.alpha;
  p.w1.resize(n);
  p.b1.resize(n);
  p.w2.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    p.w1[i] = std::abs(raw[i]) + config_.positivity_floor;
    p.b1[i] = raw[n + i];
    p.w2[i] = std::abs(raw[2 * n + i]) + config_.positivity_floor;
  }
  p.b2 = raw[3 * n];
  return p;
}

IncrMlpParams FlowModel::layer_params(int k, std::span<const double> y) const {
  if (k < 1 || k > dag_.size()) throw InvalidArgument("layer_params: layer index out of range");
  std::vector<double> raw(theta_size());
  raw_theta(k, y, raw);
  return constrain(raw);
}

std::vector<double> FlowModel::layer_forward(std::span<const double> y, int k) const {
  if (y.size() != static_cast<std::size_t>(dag_.size())) {
    throw InvalidArgument("layer_forward: dimension mismatch");
  }
  std::vector<double> out(y.begin(), y.end());
  out[static_cast<std::size_t>(k - 1)] = g_forward(y[static_cast<std::size_t>(k - 1)], layer_params(k, y));
  return out;
}

std::vector<double> FlowModel::forward(std::span<const double> z) const {
  const auto d = static_cast<std::size_t>(dag_.size());
  if (z.size() != d) throw InvalidArgument("flow forward: dimension mismatch");
  std::vector<double> y(z.begin(), z.end());
  if (config_.base == BaseKind::kGaussianQuantile)
    for (double& v : y) v = normal_cdf(v);
  for (int k = 1; k <= dag_.size(); ++k) {
    // Parents precede k, so y_PA(k) is already in transformed space.
    const auto p = layer_params(k, y);
    y[static_cast<std::size_t>(k - 1)] = g_forward(y[static_cast<std::size_t>(k - 1)], p);
  }
  for (std::size_t i = 0; i < d; ++i) y[i] = shift_[i] + scale_[i] * y[i];
  return y;
}

InverseResult FlowModel::inverse(std::span<const double> x) const {
  const auto d = static_cast<std::size_t>(dag_.size());
  if (x.size() != d) throw InvalidArgument("flow inverse: dimension mismatch");
  std::vector<double> y(d);
  for (std::size_t i = 0; i < d; ++i) y[i] = (x[i] - shift_[i]) / scale_[i];
  InverseResult out{std::vector<double>(d), false};
  // Layer k only reads parents, which no later layer touches, so every
  // coordinate can be inverted directly from the data.
  for (int k = dag_.size(); k >= 1; --k) {
    const auto i = static_cast<std::size_t>(k - 1);
    const double v = g_inverse(y[i], layer_params(k, y));
    if (config_.base == BaseKind::kGaussian) {
      out.z[i] = v;
      if (std::abs(v) > kTailZ) out.clamped = true;
    } else {
      double u = v;
      if (!(u >= kUClamp && u <= 1.0 - kUClamp)) {
        u = std::clamp(u, kUClamp, 1.0 - kUClamp);
        out.clamped = true;
      }
      out.z[i] = normal_quantile(u);
    }
  }
  return out;
}

double FlowModel::log_pdf(std::span<const double> x, bool* flagged) const {
  const auto d = static_cast<std::size_t>(dag_.size());
  if (x.size() != d) throw InvalidArgument("log_pdf: dimension mismatch");
  std::vector<double> y(d);
  for (std::size_t i = 0; i < d; ++i) y[i] = (x[i] - shift_[i]) / scale_[i];
  double lp = 0.0;
  bool clamped = false;
  bool outside = false;
  for (int k = 1; k <= dag_.size(); ++k) {
    const auto i = static_cast<std::size_t>(k - 1);
    const auto p = layer_params(k, y);
    const double v = g_inverse(y[i], p);
    lp -= std::log(g_dx(v, p)) + std::log(scale_[i]);
    if (config_.base == BaseKind::kGaussian) {
      lp += normal_logpdf(v);
      if (std::abs(v) > kTailZ) clamped = true;
    } else if (!(v > 0.0 && v < 1.0)) {
      outside = true;
      clamped = true;
    } else if (v < kUClamp || v > 1.0 - kUClamp) {
      clamped = true;
    }
  }
  if (flagged) *flagged = clamped;
  return outside ? -std::numeric_limits<double>::infinity() : lp;
}

std::vector<double> FlowModel::log_pdf_rows(const Dataset& data, std::size_t begin,
                                            std::size_t end) const {
  const auto d = static_cast<std::size_t>(dag_.size());
  if (data.cols() != d || begin > end || end > data.rows()) {
    throw InvalidArgument("log_pdf_rows: bad row range or dimension");
  }
  const auto B = static_cast<Eigen::Index>(end - begin);
  std::vector<double> out(end - begin, 0.0);
  if (B == 0) return out;
  Eigen::MatrixXd Y(static_cast<Eigen::Index>(d), B);
  double log_scale = 0.0;
  for (std::size_t i = 0; i < d; ++i) log_scale += std::log(scale_[i]);
  for (Eigen::Index c = 0; c < B; ++c) {
    const auto x = data.row(begin + static_cast<std::size_t>(c));
    for (std::size_t i = 0; i < d; ++i)
      Y(static_cast<Eigen::Index>(i), c) = (x[i] - shift_[i]) / scale_[i];
  }
  const auto m = static_cast<Eigen::Index>(theta_size());
  Eigen::MatrixXd R(m, B);
  for (int k = 1; k <= dag_.size(); ++k) {
    const auto& net = nets_[static_cast<std::size_t>(k - 1)];
    if (net.parents.empty()) {
      const auto th = params_.slice(net.theta_offset, theta_size());
      R = Eigen::Map<const Eigen::VectorXd>(th.data(), m).replicate(1, B);
    } else {
      Eigen::MatrixXd h(static_cast<Eigen::Index>(net.parents.size()), B);
      for (std::size_t p = 0; p < net.parents.size(); ++p)
        h.row(static_cast<Eigen::Index>(p)) = Y.row(net.parents[p] - 1);
      for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& L = net.layers[l];
        Eigen::MatrixXd next = ConstRowMajorMap(params_.values().data() + L.w_offset, L.out, L.in) * h;
        next.colwise() += ConstVecMap(params_.values().data() + L.b_offset, L.out);
        if (l + 1 < net.layers.size()) next = next.array().tanh();
        h = std::move(next);
      }
      R = std::move(h);
    }
    for (Eigen::Index c = 0; c < B; ++c) {
      const auto p = constrain(std::span<const double>(R.col(c).data(), theta_size()));
      const double v = g_inverse(Y(k - 1, c), p);
      double& lp = out[static_cast<std::size_t>(c)];
      lp -= std::log(g_dx(v, p));
      if (config_.base == BaseKind::kGaussian) {
        lp += normal_logpdf(v);
      } else if (!(v > 0.0 && v < 1.0)) {
        lp = -std::numeric_limits<double>::infinity();
      }
    }
  }
  for (double& lp : out) lp -= log_scale;
  return out;
}

ad::Var FlowModel::log_pdf_tape(ad::Tape& tape, ad::VarRange params, std::span<const double> x,
                                bool kink_correction) const {
  const auto d = static_cast<std::size_t>(dag_.size());
  if (x.size() != d) throw InvalidArgument("log_pdf_tape: dimension mismatch");
  if (params.size != params_.size()) throw InvalidArgument("log_pdf_tape: parameter count mismatch");
  std::vector<double> y(d);
  double log_scale = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    y[i] = (x[i] - shift_[i]) / scale_[i];
    log_scale += std::log(scale_[i]);
  }
  std::vector<ad::Var> terms;
  std::vector<double> pa_values;
  std::vector<ad::Var> raw_vars;
  for (int k = 1; k <= dag_.size(); ++k) {
    const auto& net = nets_[static_cast<std::size_t>(k - 1)];
    ad::VarRange raw;
    if (net.parents.empty()) {
      raw = params.slice(net.theta_offset, theta_size());
    } else {
      pa_values.clear();
      for (int p : net.parents) pa_values.push_back(y[static_cast<std::size_t>(p - 1)]);
      ad::VarRange h = tape.leaves(pa_values);
      for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& L = net.layers[l];
        h = tape.affine(params.slice(L.w_offset, static_cast<std::size_t>(L.in * L.out)), h,
                        params.slice(L.b_offset, static_cast<std::size_t>(L.out)));
        if (l + 1 < net.layers.size()) h = tape.tanh(h);
      }
      raw = h;
    }
    raw_vars = raw.vars();
    terms.push_back(node_term(tape, raw_vars, y[static_cast<std::size_t>(k - 1)], kink_correction));
  }
  return tape.sum(terms) + (-log_scale);
}

ad::Var FlowModel::node_term(ad::Tape& tape, std::span<const ad::Var> raw, double yk,
                             bool kink_correction) const {
  const auto n = static_cast<std::size_t>(config_.width);
  std::vector<ad::Var> theta(theta_size());
  for (std::size_t i = 0; i < n; ++i) {
    theta[i] = tape.abs_floor(raw[i], config_.positivity_floor);
    theta[n + i] = raw[n + i];
    theta[2 * n + i] = tape.abs_floor(raw[2 * n + i], config_.positivity_floor);
  }
  theta[3 * n] = raw[3 * n];
  const ad::Var y = tape.leaf(yk);
  const ad::Var v = g_inverse_tape(tape, y, theta, config_.alpha);
  if (config_.base == BaseKind::kGaussianQuantile && !(v.value() > 0.0 && v.value() < 1.0)) {
    throw EvaluationError("log density: point outside the model support", v.id);
  }
  ad::Var term = -g_log_dx_tape(tape, v.value(), theta, config_.alpha);
  if (config_.base == BaseKind::kGaussian) term = term + tape.gauss_logpdf(v);
  if (kink_correction) {
    term = term + g_kink_boundary_tape(tape, theta, config_.alpha,
                                       config_.base == BaseKind::kGaussianQuantile);
  }
  return term;
}

double FlowModel::log_pdf_gradient(const Dataset& data, std::span<const std::size_t> rows,
                                   std::span<double> grad, bool kink_correction) const {
  using Mat = Eigen::MatrixXd;
  using RowMajorMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  const auto d = static_cast<std::size_t>(dag_.size());
  if (data.cols() != d) throw InvalidArgument("log_pdf_gradient: dimension mismatch");
  if (grad.size() != params_.size()) throw InvalidArgument("log_pdf_gradient: gradient size mismatch");
  const auto B = static_cast<Eigen::Index>(rows.size());
  if (B == 0) return 0.0;

  Mat Y(static_cast<Eigen::Index>(d), B);
  double log_scale = 0.0;
  for (std::size_t i = 0; i < d; ++i) log_scale += std::log(scale_[i]);
  for (Eigen::Index c = 0; c < B; ++c) {
    const auto x = data.row(rows[static_cast<std::size_t>(c)]);
    for (std::size_t i = 0; i < d; ++i)
      Y(static_cast<Eigen::Index>(i), c) = (x[i] - shift_[i]) / scale_[i];
  }

  thread_local ad::Tape tape;
  const auto m = static_cast<Eigen::Index>(theta_size());
  Mat R(m, B), dR(m, B);
  std::vector<Mat> acts;
  double total = 0.0;
  std::vector<double> raw_values(theta_size());
  for (int k = 1; k <= dag_.size(); ++k) {
    const auto& net = nets_[static_cast<std::size_t>(k - 1)];
    if (net.parents.empty()) {
      const auto th = params_.slice(net.theta_offset, theta_size());
      R = Eigen::Map<const Eigen::VectorXd>(th.data(), m).replicate(1, B);
    } else {
      acts.assign(1, Mat(static_cast<Eigen::Index>(net.parents.size()), B));
      for (std::size_t p = 0; p < net.parents.size(); ++p)
        acts[0].row(static_cast<Eigen::Index>(p)) = Y.row(net.parents[p] - 1);
      for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& L = net.layers[l];
        Mat out = ConstRowMajorMap(params_.values().data() + L.w_offset, L.out, L.in) * acts.back();
        out.colwise() += ConstVecMap(params_.values().data() + L.b_offset, L.out);
        if (l + 1 < net.layers.size()) {
          acts.push_back(out.array().tanh().matrix());
        } else {
          R = std::move(out);
        }
      }
    }
    for (Eigen::Index c = 0; c < B; ++c) {
      tape.clear();
      const ad::VarRange raw = tape.leaves(std::span<const double>(R.col(c).data(), theta_size()));
      const auto raw_vars = raw.vars();
      const std::size_t row = rows[static_cast<std::size_t>(c)];
      ad::Var term;
      try {
        term = node_term(tape, raw_vars, Y(k - 1, c), kink_correction);
      } catch (const EvaluationError& ex) {
        throw EvaluationError(ex.what(), row);
      }
      if (!std::isfinite(term.value())) throw EvaluationError("log density is not finite", row);
      total += term.value();
      const auto g = tape.gradient(term);
      for (Eigen::Index j = 0; j < m; ++j) dR(j, c) = g[static_cast<std::size_t>(j)];
    }
    if (net.parents.empty()) {
      Eigen::Map<Eigen::VectorXd>(grad.data() + net.theta_offset, m) += dR.rowwise().sum();
      continue;
    }
    Mat G = dR;
    for (std::size_t l = net.layers.size(); l-- > 0;) {
      const auto& L = net.layers[l];
      RowMajorMap(grad.data() + L.w_offset, L.out, L.in).noalias() += G * acts[l].transpose();
      Eigen::Map<Eigen::VectorXd>(grad.data() + L.b_offset, L.out) += G.rowwise().sum();
      if (l == 0) break;
      Mat back = ConstRowMajorMap(params_.values().data() + L.w_offset, L.out, L.in).transpose() * G;
      G = back.array() * (1.0 - acts[l].array().square());
    }
  }
  return total - log_scale * static_cast<double>(B);
}

bool FlowModel::operator==(const FlowModel& other) const {
  return dag_ == other.dag_ && config_.width == other.config_.width &&
         config_.alpha == other.config_.alpha && config_.hidden == other.config_.hidden &&
         config_.base == other.config_.base &&
         config_.positivity_floor == other.config_.positivity_floor && params_ == other.params_ &&
         shift_ == other.shift_ && scale_ == other.scale_;
}

Dataset sample(const FlowModel& model, std::size_t n, std::uint64_t seed) {
  const auto d = static_cast<std::size_t>(model.size());
  Dataset out(n, d);
  Rng rng(seed);
  std::vector<double> z(d);
  for (std::size_t r = 0; r < n; ++r) {
    for (double& v : z) v = rng.normal();
    const auto x = model.forward(z);
    std::copy(x.begin(), x.end(), out.row(r).begin());
  }
  return out;
}

Dag dense_baseline_dag(int d) { return Dag::complete(d); }

nlohmann::json to_json(const FlowModel& model) {
  nlohmann::json layout = nlohmann::json::array();
  for (const auto& s : model.params().layout())
    layout.push_back({{"name", s.name}, {"offset", s.offset}, {"size", s.size}});
  const auto values = model.params().values();
  return {{"format", "causalflow-checkpoint-1"},
          {"dag", to_json(model.dag())},
          {"width", model.config().width},
          {"alpha", model.config().alpha},
          {"hidden", model.config().hidden},
          {"base", to_string(model.config().base)},
          {"positivity_floor", model.config().positivity_floor},
          {"head_init_scale", model.config().head_init_scale},
          {"shift", model.shift()},
          {"scale", model.scale()},
          {"layout", layout},
          {"params", std::vector<double>(values.begin(), values.end())}};
}

FlowModel flow_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "causalflow-checkpoint-1") {
      throw InvalidArgument("checkpoint: unsupported format");
    }
    FlowConfig cfg;
    cfg.width = j.at("width").get<int>();
    cfg.alpha = j.at("alpha").get<double>();
    cfg.hidden = j.at("hidden").get<std::vector<int>>();
    cfg.base = base_kind_from_string(j.at("base").get<std::string>());
    cfg.positivity_floor = j.at("positivity_floor").get<double>();
    cfg.head_init_scale = j.at("head_init_scale").get<double>();
    FlowModel model(dag_from_json(j.at("dag")), cfg, 0);
    const auto values = j.at("params").get<std::vector<double>>();
    if (values.size() != model.params().size()) {
      throw InvalidArgument("checkpoint: parameter count does not match architecture");
    }
    const auto& layout = j.at("layout");
    if (layout.size() != model.params().layout().size()) {
      throw InvalidArgument("checkpoint: layout mismatch");
    }
    for (std::size_t s = 0; s < layout.size(); ++s) {
      const auto& expect = model.params().layout()[s];
      if (layout[s].at("name").get<std::string>() != expect.name ||
          layout[s].at("offset").get<std::size_t>() != expect.offset ||
          layout[s].at("size").get<std::size_t>() != expect.size) {
        throw InvalidArgument("checkpoint: layout mismatch at slice " + expect.name);
      }
    }
    std::copy(values.begin(), values.end(), model.params().values().begin());
    model.set_standardization(j.at("shift").get<std::vector<double>>(),
                              j.at("scale").get<std::vector<double>>());
    return model;
  } catch (const nlohmann::json::exception& ex) {
    throw InvalidArgument(std::string("checkpoint json: ") + ex.what());
  }
}

}  // namespace causalflow
