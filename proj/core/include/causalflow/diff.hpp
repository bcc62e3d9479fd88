#pragma once

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "causalflow/error.hpp"

namespace causalflow::ad {

class Tape;

// Handle to a scalar node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  double value() const;
};

// Contiguous run of nodes [begin, begin + size).
struct VarRange {
  Tape* tape = nullptr;
  std::uint32_t begin = 0;
  std::uint32_t size = 0;

  Var operator[](std::size_t i) const {
    return {tape, begin + static_cast<std::uint32_t>(i)};
  }
  VarRange slice(std::size_t offset, std::size_t count) const {
    return {tape, begin + static_cast<std::uint32_t>(offset), static_cast<std::uint32_t>(count)};
  }
  std::vector<Var> vars() const;
};

// Append-only reverse-mode tape. Nodes are scalars; a few block primitives
// (affine maps, elementwise tanh) record ranges instead of per-element
// edges. Creation order is a topological order.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  std::size_t size() const { return values_.size(); }
  double value(Var v) const { return values_[v.id]; }
  std::span<const double> values(VarRange r) const {
    return {values_.data() + r.begin, r.size};
  }

  // Leaves (parameters, inputs, constants). Their adjoints are returned by
  // gradient().
  Var leaf(double v);
  VarRange leaves(std::span<const double> v);

  // Generic node: value plus local partials with respect to parents.
  Var node(double value, std::span<const Var> parents, std::span<const double> partials);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var neg(Var a);
  Var add(Var a, double c);
  Var mul(Var a, double c);
  Var log(Var a);
  Var exp(Var a);
  // |x| + eps.
  Var abs_floor(Var a, double eps);
  // rho(x) = LeakyReLU_{alpha-1}(1+x)/2 - LeakyReLU_{alpha-1}(1-x)/2.
  Var leaky_segments(Var a, double alpha);
  Var gauss_logpdf(Var a);
  Var gauss_cdf(Var a);
  Var gauss_quantile(Var a);
  Var dot(VarRange a, VarRange b);
  Var dot(std::span<const Var> a, std::span<const Var> b);
  Var sum(VarRange a);
  Var sum(std::span<const Var> a);

  // out = W x (+ b). W is row-major rows x x.size; b may be empty.
  VarRange matvec(VarRange w, VarRange x);
  VarRange affine(VarRange w, VarRange x, VarRange b);
  VarRange tanh(VarRange x);

  // Adjoints of every leaf in creation order.
  std::vector<double> gradient(Var output) const;
  // Throws InvalidArgument unless the range holds a single node.
  std::vector<double> gradient(VarRange output) const;
  // Adds d output / d node for nodes [first, first + accum.size()) into accum.
  void accumulate_gradient(Var output, std::uint32_t first, std::span<double> accum) const;

  // Drops every node created after `mark` (a previous size()).
  void rewind(std::size_t mark);
  void clear();

 private:
  enum class OpKind : std::uint8_t { kScalar, kAffine, kTanh };
  struct Op {
    OpKind kind;
    std::uint32_t out, out_n;
    std::uint32_t a, a_n;  // W (affine) or input (tanh)
    std::uint32_t b, b_n;  // x (affine)
    std::uint32_t c, c_n;  // bias (affine)
    std::uint32_t edge_begin, edge_end;
  };

  Var push_scalar(double value);
  void add_edge(std::uint32_t parent, double partial);
  void backward(Var output) const;
  std::uint32_t next_id() const { return static_cast<std::uint32_t>(values_.size()); }

  std::vector<double> values_;
  std::vector<Op> ops_;
  std::vector<std::uint32_t> leaf_ids_;
  std::vector<std::uint32_t> edge_parent_;
  std::vector<double> edge_partial_;
  mutable std::vector<double> adjoint_;
};

inline double Var::value() const { return tape->value(*this); }

inline Var operator+(Var a, Var b) { return a.tape->add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape->sub(a, b); }
inline Var operator*(Var a, Var b) { return a.tape->mul(a, b); }
inline Var operator/(Var a, Var b) { return a.tape->div(a, b); }
inline Var operator-(Var a) { return a.tape->neg(a); }
inline Var operator+(Var a, double c) { return a.tape->add(a, c); }
inline Var operator*(Var a, double c) { return a.tape->mul(a, c); }
inline Var operator*(double c, Var a) { return a.tape->mul(a, c); }

// Value and local derivative of rho; right derivative at the kinks x = +-1.
inline double leaky_segments_value(double x, double alpha) {
  if (x >= 1.0) return 0.5 * alpha * x + 0.5 * (2.0 - alpha);
  if (x < -1.0) return 0.5 * alpha * x - 0.5 * (2.0 - alpha);
  return x;
}
inline double leaky_segments_slope(double x, double alpha) {
  return (x >= -1.0 && x < 1.0) ? 1.0 : 0.5 * alpha;
}

// Flat trainable array with named, non-overlapping slices.
class ParamVector {
 public:
  struct Slice {
    std::string name;
    std::size_t offset = 0;
    std::size_t size = 0;

    bool operator==(const Slice&) const = default;
  };

  std::size_t add(std::string name, std::size_t size);
  std::size_t size() const { return values_.size(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> slice(std::size_t offset, std::size_t size) {
    return {values_.data() + offset, size};
  }
  std::span<const double> slice(std::size_t offset, std::size_t size) const {
    return {values_.data() + offset, size};
  }
  const std::vector<Slice>& layout() const { return layout_; }
  const Slice& find(const std::string& name) const;
  // Throws unless the slices tile [0, size()) exactly.
  void validate_layout() const;

  bool operator==(const ParamVector&) const = default;

 private:
  std::vector<double> values_;
  std::vector<Slice> layout_;
};

// Records y = g(x; theta) on a tape.
template <class F>
concept TapeForward = requires(F f, Tape& t, Var x, std::span<const Var> theta) {
  { f(t, x, theta) } -> std::same_as<Var>;
};

struct ImplicitInverse {
  double x = 0.0;
  double dx_dy = 0.0;
  std::vector<double> dx_dtheta;
};

// Given a strictly increasing g(.; theta) and x with g(x; theta) = y, returns
// dx/dtheta = -(dg/dtheta) / (dg/dx) and dx/dy = 1 / (dg/dx) at x. The
// derivatives of g come from a reverse pass over `forward` on a scratch tape.
template <TapeForward F>
ImplicitInverse implicit_inverse_grad(F&& forward, std::span<const double> theta, double x) {
  thread_local Tape scratch;
  scratch.clear();
  const Var xv = scratch.leaf(x);
  const VarRange th = scratch.leaves(theta);
  const auto th_vars = th.vars();
  const Var y = forward(scratch, xv, th_vars);
  const auto grad = scratch.gradient(y);
  const double slope = grad[0];
  if (!(slope > 0.0)) {
    throw EvaluationError("implicit_inverse_grad: forward slope is not positive", y.id);
  }
  ImplicitInverse out{x, 1.0 / slope, std::vector<double>(theta.size())};
  for (std::size_t j = 0; j < theta.size(); ++j) out.dx_dtheta[j] = -grad[1 + j] / slope;
  return out;
}

// Tape node for x = g^{-1}(y; theta), where `x` is the already-solved inverse.
template <TapeForward F>
Var implicit_inverse(Tape& tape, std::span<const Var> theta, Var y, double x, F&& forward) {
  std::vector<double> th(theta.size());
  for (std::size_t j = 0; j < theta.size(); ++j) th[j] = tape.value(theta[j]);
  const auto inv = implicit_inverse_grad(forward, th, x);
  std::vector<Var> parents(theta.begin(), theta.end());
  parents.push_back(y);
  std::vector<double> partials = inv.dx_dtheta;
  partials.push_back(inv.dx_dy);
  return tape.node(x, parents, partials);
}

}  // namespace causalflow::ad
