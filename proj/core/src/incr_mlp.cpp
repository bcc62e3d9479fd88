#include "causalflow/incr_mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "causalflow/error.hpp"
#include "causalflow/gaussian.hpp"

namespace causalflow {

void IncrMlpParams::validate() const {
  const std::size_t n = w1.size();
  if (n == 0 || b1.size() != n || w2.size() != n) {
    throw InvalidArgument("IncrMlpParams: w1, b1, w2 must share a nonzero width");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("IncrMlpParams: alpha outside (0, 1)");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(w1[i] > 0.0) || !(w2[i] > 0.0)) {
      throw InvalidArgument("IncrMlpParams: weights must be strictly positive");
    }
  }
}

std::vector<double> IncrMlpParams::flatten() const {
  std::vector<double> out;
  out.reserve(3 * w1.size() + 1);
  out.insert(out.end(), w1.begin(), w1.end());
  out.insert(out.end(), b1.begin(), b1.end());
  out.insert(out.end(), w2.begin(), w2.end());
  out.push_back(b2);
  return out;
}

IncrMlpParams IncrMlpParams::unflatten(std::span<const double> flat, double alpha) {
  if (flat.size() < 4 || (flat.size() - 1) % 3 != 0) {
    throw InvalidArgument("IncrMlpParams: flat size must be 3n + 1");
  }
  const std::size_t n = (flat.size() - 1) / 3;
  IncrMlpParams p;
  p.w1.assign(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(n));
  p.b1.assign(flat.begin() + static_cast<std::ptrdiff_t>(n), flat.begin() + static_cast<std::ptrdiff_t>(2 * n));
  p.w2.assign(flat.begin() + static_cast<std::ptrdiff_t>(2 * n), flat.begin() + static_cast<std::ptrdiff_t>(3 * n));
  p.b2 = flat[3 * n];
  p.alpha = alpha;
  return p;
}

double g_forward(double x, const IncrMlpParams& theta) {
  double y = theta.b2;
  for (std::size_t i = 0; i < theta.w1.size(); ++i)
    y += theta.w2[i] * ad::leaky_segments_value(theta.w1[i] * x + theta.b1[i], theta.alpha);
  return y;
}

double g_dx(double x, const IncrMlpParams& theta) {
  double s = 0.0;
  for (std::size_t i = 0; i < theta.w1.size(); ++i)
    s += theta.w2[i] * theta.w1[i] *
         ad::leaky_segments_slope(theta.w1[i] * x + theta.b1[i], theta.alpha);
  return s;
}

double g_min_slope(const IncrMlpParams& theta) {
  double s = 0.0;
  for (std::size_t i = 0; i < theta.w1.size(); ++i) s += theta.w2[i] * theta.w1[i];
  return 0.5 * theta.alpha * s;
}

std::vector<double> g_breakpoints(const IncrMlpParams& theta) {
  std::vector<double> bp;
  bp.reserve(2 * theta.w1.size());
  for (std::size_t i = 0; i < theta.w1.size(); ++i) {
    bp.push_back((-1.0 - theta.b1[i]) / theta.w1[i]);
    bp.push_back((1.0 - theta.b1[i]) / theta.w1[i]);
  }
  std::sort(bp.begin(), bp.end());
  return bp;
}

double g_inverse(double y, const IncrMlpParams& theta) {
  const std::size_t n = theta.w1.size();
  // Kinks with the slope change they cause: entering the linear region of
  // neuron i adds w2 w1 (1 - alpha/2), leaving it removes the same amount.
  thread_local std::vector<std::pair<double, double>> kinks;
  kinks.clear();
  const double gain = 1.0 - 0.5 * theta.alpha;
  for (std::size_t i = 0; i < n; ++i) {
    const double delta = theta.w2[i] * theta.w1[i] * gain;
    kinks.emplace_back((-1.0 - theta.b1[i]) / theta.w1[i], delta);
    kinks.emplace_back((1.0 - theta.b1[i]) / theta.w1[i], -delta);
  }
  std::sort(kinks.begin(), kinks.end());

  // g at each kink by walking the segments; g is increasing so these are
  // sorted too.
  thread_local std::vector<double> gb;
  gb.resize(kinks.size());
  gb[0] = g_forward(kinks[0].first, theta);
  const double outer = g_min_slope(theta);
  double slope = outer;
  for (std::size_t k = 0; k + 1 < kinks.size(); ++k) {
    slope += kinks[k].second;
    gb[k + 1] = gb[k] + slope * (kinks[k + 1].first - kinks[k].first);
  }

  // Outer segments: below the first kink every neuron is saturated low,
  // above the last one every neuron is saturated high; both have slope
  // (alpha/2) sum w2 w1.
  if (y <= gb.front()) return kinks.front().first - (gb.front() - y) / outer;
  const double last = g_forward(kinks.back().first, theta);
  if (y >= last) return kinks.back().first + (y - last) / outer;

  const auto it = std::upper_bound(gb.begin(), gb.end(), y);
  std::size_t hi = static_cast<std::size_t>(it - gb.begin());
  if (hi == gb.size()) hi = gb.size() - 1;
  const std::size_t lo = hi == 0 ? 0 : hi - 1;
  const double a = kinks[lo].first;
  const double b = kinks[hi].first;
  if (b - a <= 0.0) return a;
  // Solve on the located segment with exactly evaluated end data.
  const double seg_slope = g_dx(0.5 * (a + b), theta);
  const double x = a + (y - g_forward(a, theta)) / seg_slope;
  return std::clamp(x, a, b);
}

ad::Var g_forward_tape(ad::Tape& tape, ad::Var x, std::span<const ad::Var> theta, double alpha) {
  const std::size_t n = (theta.size() - 1) / 3;
  std::vector<ad::Var> act(n);
  for (std::size_t i = 0; i < n; ++i) {
    act[i] = tape.leaky_segments(theta[i] * x + theta[n + i], alpha);
  }
  return tape.dot(theta.subspan(2 * n, n), act) + theta[3 * n];
}

ad::Var g_log_dx_tape(ad::Tape& tape, double x, std::span<const ad::Var> theta, double alpha) {
  const std::size_t n = (theta.size() - 1) / 3;
  std::vector<ad::Var> parents;
  std::vector<double> partials;
  parents.reserve(2 * n);
  partials.reserve(2 * n);
  double slope = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w1 = tape.value(theta[i]);
    const double w2 = tape.value(theta[2 * n + i]);
    const double s = ad::leaky_segments_slope(w1 * x + tape.value(theta[n + i]), alpha);
    slope += w2 * w1 * s;
    parents.push_back(theta[i]);
    partials.push_back(w2 * s);
    parents.push_back(theta[2 * n + i]);
    partials.push_back(w1 * s);
  }
  if (!(slope > 0.0)) throw EvaluationError("g_log_dx_tape: non-positive slope", tape.size());
  for (double& p : partials) p /= slope;
  return tape.node(std::log(slope), parents, partials);
}

ad::Var g_inverse_tape(ad::Tape& tape, ad::Var y, std::span<const ad::Var> theta, double alpha) {
  const std::size_t n = (theta.size() - 1) / 3;
  std::vector<double> flat(theta.size());
  for (std::size_t j = 0; j < theta.size(); ++j) flat[j] = tape.value(theta[j]);
  const auto p = IncrMlpParams::unflatten(flat, alpha);
  const double x = g_inverse(tape.value(y), p);
  // Implicit function theorem: dx/dtheta = -(dg/dtheta) / g'(x), dx/dy = 1 / g'(x).
  const double slope = g_dx(x, p);
  if (!(slope > 0.0)) throw EvaluationError("g_inverse_tape: non-positive slope", tape.size());
  std::vector<ad::Var> parents(theta.begin(), theta.end());
  parents.push_back(y);
  std::vector<double> partials(theta.size() + 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = p.w1[i] * x + p.b1[i];
    const double r = ad::leaky_segments_slope(u, alpha);
    partials[i] = -p.w2[i] * r * x / slope;
    partials[n + i] = -p.w2[i] * r / slope;
    partials[2 * n + i] = -ad::leaky_segments_value(u, alpha) / slope;
  }
  partials[3 * n] = -1.0 / slope;
  partials[3 * n + 1] = 1.0 / slope;
  return tape.node(x, parents, partials);
}

// dy_b/dtheta collects, for every neuron m other than the owner of kink b,
// the derivative of w2_m rho(w1_m z_b + b1_m) at fixed z_b, plus the motion
// of z_b itself. Sums over b of the first part only depend on which of the
// three linear pieces of neuron m contains z_b, so they come from prefix
// sums over the sorted kinks.
ad::Var g_kink_boundary_tape(ad::Tape& tape, std::span<const ad::Var> theta, double alpha, bool uniform_base) {
  const std::size_t n = (theta.size() - 1) / 3;
  const std::size_t K = 2 * n;
  thread_local std::vector<double> th;
  th.resize(theta.size());
  for (std::size_t j = 0; j < th.size(); ++j) th[j] = theta[j].value();
  const double* w1 = th.data();
  const double* b1 = th.data() + n;
  const double* w2 = th.data() + 2 * n;
  const double half = 0.5 * alpha;
  const double gain = 1.0 - half;

  struct Kink {
    double z;
    std::uint32_t owner;
    bool upper;  // leaving the linear region of its owner
  };
  thread_local std::vector<Kink> kinks;
  thread_local std::vector<double> c, C, Z;
  thread_local std::vector<std::size_t> lo_pos, hi_pos;
  kinks.clear();
  double outer = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    kinks.push_back({(-1.0 - b1[i]) / w1[i], static_cast<std::uint32_t>(i), false});
    kinks.push_back({(1.0 - b1[i]) / w1[i], static_cast<std::uint32_t>(i), true});
    outer += w2[i] * w1[i];
  }
  outer *= half;
  std::sort(kinks.begin(), kinks.end(), [](const Kink& a, const Kink& b) {
    return a.z < b.z || (a.z == b.z && a.owner < b.owner) ||
           (a.z == b.z && a.owner == b.owner && !a.upper && b.upper);
  });
  c.assign(K, 0.0);
  C.assign(K + 1, 0.0);
  Z.assign(K + 1, 0.0);
  lo_pos.resize(n);
  hi_pos.resize(n);
  std::vector<double> partial(theta.size(), 0.0);
  double slope = outer;  // slope just left of the current kink
  for (std::size_t k = 0; k < K; ++k) {
    const Kink& kb = kinks[k];
    const std::size_t i = kb.owner;
    const double own = w2[i] * w1[i] * gain;
    const double left = slope;
    const double right = slope + (kb.upper ? -own : own);
    slope = right;
    (kb.upper ? hi_pos : lo_pos)[i] = k;
    const double density = uniform_base ? ((kb.z > 0.0 && kb.z < 1.0) ? 1.0 : 0.0) : normal_pdf(kb.z);
    // Density at the kink taken as the logarithmic mean of the one-sided
    // densities, which makes the corrected score mean-zero under the model;
    // the log factor then cancels.
    const double cb = density * (1.0 / left - 1.0 / right);
    c[k] = cb;
    C[k + 1] = C[k] + cb;
    Z[k + 1] = Z[k] + cb * kb.z;
    // Motion of z_b and the owner's own constant contribution w2_i rho(+-1).
    const double rest = (kb.upper ? right : left) - w2[i] * w1[i] * half;
    partial[2 * n + i] += cb * (kb.upper ? 1.0 : -1.0);
    partial[3 * n] += cb;
    partial[n + i] -= cb * rest / w1[i];
    partial[i] -= cb * rest * kb.z / w1[i];
  }
  const double sat = 0.5 * (2.0 - alpha);
  for (std::size_t m = 0; m < n; ++m) {
    const std::size_t pl = lo_pos[m], ph = hi_pos[m];
    const double in_c = C[ph] - C[pl], in_z = Z[ph] - Z[pl];
    const double below_c = C[pl], below_z = Z[pl];
    const double above_c = C[K] - C[ph], above_z = Z[K] - Z[ph];
    // Remove the owner's kinks: the lower one counts as inside, the upper
    // one as above.
    const double cl = c[pl], ch = c[ph];
    const double zl = kinks[pl].z, zh = kinks[ph].z;
    const double r_c = (in_c - cl) + half * (below_c + above_c - ch);
    const double r_z = (in_z - cl * zl) + half * (below_z + above_z - ch * zh);
    partial[m] += w2[m] * r_z;
    partial[n + m] += w2[m] * r_c;
    const double lin_in = w1[m] * (in_z - cl * zl) + b1[m] * (in_c - cl);
    const double lin_below = half * (w1[m] * below_z + b1[m] * below_c) - sat * below_c;
    const double lin_above = half * (w1[m] * (above_z - ch * zh) + b1[m] * (above_c - ch)) +
                             sat * (above_c - ch);
    partial[2 * n + m] += lin_in + lin_below + lin_above;
  }
  return tape.node(0.0, theta, partial);
}

}  // namespace causalflow
