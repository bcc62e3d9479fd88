#include "causalflow/diff.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Core>

#include "causalflow/gaussian.hpp"

namespace causalflow::ad {

namespace {

using ConstRowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using RowMajorMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;

}  // namespace

std::vector<Var> VarRange::vars() const {
  std::vector<Var> out(size);
  for (std::uint32_t i = 0; i < size; ++i) out[i] = {tape, begin + i};
  return out;
}

Var Tape::push_scalar(double value) {
  const std::uint32_t id = next_id();
  values_.push_back(value);
  const auto e = static_cast<std::uint32_t>(edge_parent_.size());
  ops_.push_back({OpKind::kScalar, id, 1, 0, 0, 0, 0, 0, 0, e, e});
  return {this, id};
}

void Tape::add_edge(std::uint32_t parent, double partial) {
  edge_parent_.push_back(parent);
  edge_partial_.push_back(partial);
  ops_.back().edge_end = static_cast<std::uint32_t>(edge_parent_.size());
}

Var Tape::leaf(double v) {
  const std::uint32_t id = next_id();
  values_.push_back(v);
  leaf_ids_.push_back(id);
  return {this, id};
}

VarRange Tape::leaves(std::span<const double> v) {
  const std::uint32_t begin = next_id();
  for (double x : v) leaf(x);
  return {this, begin, static_cast<std::uint32_t>(v.size())};
}

Var Tape::node(double value, std::span<const Var> parents, std::span<const double> partials) {
  if (parents.size() != partials.size()) {
    throw InvalidArgument("Tape::node: parents and partials differ in length");
  }
  if (!std::isfinite(value)) throw EvaluationError("Tape: non-finite node value", next_id());
  const Var out = push_scalar(value);
  for (std::size_t i = 0; i < parents.size(); ++i) add_edge(parents[i].id, partials[i]);
  return out;
}

Var Tape::add(Var a, Var b) {
  const Var out = push_scalar(value(a) + value(b));
  add_edge(a.id, 1.0);
  add_edge(b.id, 1.0);
  return out;
}

Var Tape::sub(Var a, Var b) {
  const Var out = push_scalar(value(a) - value(b));
  add_edge(a.id, 1.0);
  add_edge(b.id, -1.0);
  return out;
}

Var Tape::mul(Var a, Var b) {
  const double va = value(a);
  const double vb = value(b);
  const Var out = push_scalar(va * vb);
  add_edge(a.id, vb);
  add_edge(b.id, va);
  return out;
}

Var Tape::div(Var a, Var b) {
  const double va = value(a);
  const double vb = value(b);
  if (vb == 0.0) throw EvaluationError("Tape::div: zero denominator", next_id());
  const Var out = push_scalar(va / vb);
  add_edge(a.id, 1.0 / vb);
  add_edge(b.id, -va / (vb * vb));
  return out;
}

Var Tape::neg(Var a) {
  const Var out = push_scalar(-value(a));
  add_edge(a.id, -1.0);
  return out;
}

Var Tape::add(Var a, double c) {
  const Var out = push_scalar(value(a) + c);
  add_edge(a.id, 1.0);
  return out;
}

Var Tape::mul(Var a, double c) {
  const Var out = push_scalar(value(a) * c);
  add_edge(a.id, c);
  return out;
}

Var Tape::log(Var a) {
  const double va = value(a);
  if (!(va > 0.0)) throw EvaluationError("Tape::log: non-positive argument", next_id());
  const Var out = push_scalar(std::log(va));
  add_edge(a.id, 1.0 / va);
  return out;
}

Var Tape::exp(Var a) {
  const double e = std::exp(value(a));
  if (!std::isfinite(e)) throw EvaluationError("Tape::exp: overflow", next_id());
  const Var out = push_scalar(e);
  add_edge(a.id, e);
  return out;
}

Var Tape::abs_floor(Var a, double eps) {
  const double va = value(a);
  const Var out = push_scalar(std::abs(va) + eps);
  add_edge(a.id, va >= 0.0 ? 1.0 : -1.0);
  return out;
}

Var Tape::leaky_segments(Var a, double alpha) {
  const double va = value(a);
  const Var out = push_scalar(leaky_segments_value(va, alpha));
  add_edge(a.id, leaky_segments_slope(va, alpha));
  return out;
}

Var Tape::gauss_logpdf(Var a) {
  const double va = value(a);
  const Var out = push_scalar(normal_logpdf(va));
  add_edge(a.id, -va);
  return out;
}

Var Tape::gauss_cdf(Var a) {
  const double va = value(a);
  const Var out = push_scalar(normal_cdf(va));
  add_edge(a.id, normal_pdf(va));
  return out;
}

Var Tape::gauss_quantile(Var a) {
  const double va = value(a);
  if (!(va > 0.0 && va < 1.0)) {
    throw EvaluationError("Tape::gauss_quantile: argument outside (0, 1)", next_id());
  }
  const double z = normal_quantile(va);
  const Var out = push_scalar(z);
  add_edge(a.id, 1.0 / normal_pdf(z));
  return out;
}

Var Tape::dot(VarRange a, VarRange b) {
  if (a.size != b.size) throw InvalidArgument("Tape::dot: length mismatch");
  double s = 0.0;
  for (std::uint32_t i = 0; i < a.size; ++i) s += values_[a.begin + i] * values_[b.begin + i];
  const Var out = push_scalar(s);
  for (std::uint32_t i = 0; i < a.size; ++i) {
    const double va = values_[a.begin + i];
    const double vb = values_[b.begin + i];
    add_edge(a.begin + i, vb);
    add_edge(b.begin + i, va);
  }
  return out;
}

Var Tape::dot(std::span<const Var> a, std::span<const Var> b) {
  if (a.size() != b.size()) throw InvalidArgument("Tape::dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += value(a[i]) * value(b[i]);
  const Var out = push_scalar(s);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double va = value(a[i]);
    const double vb = value(b[i]);
    add_edge(a[i].id, vb);
    add_edge(b[i].id, va);
  }
  return out;
}

Var Tape::sum(VarRange a) {
  double s = 0.0;
  for (std::uint32_t i = 0; i < a.size; ++i) s += values_[a.begin + i];
  const Var out = push_scalar(s);
  for (std::uint32_t i = 0; i < a.size; ++i) add_edge(a.begin + i, 1.0);
  return out;
}

Var Tape::sum(std::span<const Var> a) {
  double s = 0.0;
  for (const Var& v : a) s += value(v);
  const Var out = push_scalar(s);
  for (const Var& v : a) add_edge(v.id, 1.0);
  return out;
}

VarRange Tape::matvec(VarRange w, VarRange x) { return affine(w, x, {this, 0, 0}); }

VarRange Tape::affine(VarRange w, VarRange x, VarRange b) {
  if (x.size == 0 || w.size % x.size != 0) {
    throw InvalidArgument("Tape::affine: weight size is not a multiple of input size");
  }
  const std::uint32_t rows = w.size / x.size;
  if (b.size != 0 && b.size != rows) throw InvalidArgument("Tape::affine: bias size mismatch");
  const std::uint32_t out = next_id();
  values_.resize(values_.size() + rows);
  VecMap y(values_.data() + out, rows);
  y.noalias() = ConstRowMajorMap(values_.data() + w.begin, rows, x.size) *
                ConstVecMap(values_.data() + x.begin, x.size);
  if (b.size) y += ConstVecMap(values_.data() + b.begin, rows);
  const auto e = static_cast<std::uint32_t>(edge_parent_.size());
  ops_.push_back({OpKind::kAffine, out, rows, w.begin, w.size, x.begin, x.size, b.begin, b.size, e, e});
  return {this, out, rows};
}

VarRange Tape::tanh(VarRange x) {
  const std::uint32_t out = next_id();
  values_.resize(values_.size() + x.size);
  for (std::uint32_t i = 0; i < x.size; ++i) values_[out + i] = std::tanh(values_[x.begin + i]);
  const auto e = static_cast<std::uint32_t>(edge_parent_.size());
  ops_.push_back({OpKind::kTanh, out, x.size, x.begin, x.size, 0, 0, 0, 0, e, e});
  return {this, out, x.size};
}

void Tape::backward(Var output) const {
  if (output.tape != this || output.id >= values_.size()) {
    throw InvalidArgument("Tape::gradient: output does not belong to this tape");
  }
  adjoint_.assign(values_.size(), 0.0);
  adjoint_[output.id] = 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    const Op& op = *it;
    if (op.out > output.id) continue;
    switch (op.kind) {
      case OpKind::kScalar: {
        const double g = adjoint_[op.out];
        if (g == 0.0) break;
        for (std::uint32_t e = op.edge_begin; e < op.edge_end; ++e)
          adjoint_[edge_parent_[e]] += edge_partial_[e] * g;
        break;
      }
      case OpKind::kAffine: {
        const std::uint32_t rows = op.out_n;
        const std::uint32_t cols = op.b_n;
        ConstVecMap gy(adjoint_.data() + op.out, rows);
        if (gy.isZero(0.0)) break;
        // Scratch copy: parents precede the output, so the ranges never alias
        // gy, but Eigen cannot prove that.
        const Eigen::VectorXd g = gy;
        VecMap(adjoint_.data() + op.b, cols).noalias() +=
            ConstRowMajorMap(values_.data() + op.a, rows, cols).transpose() * g;
        RowMajorMap(adjoint_.data() + op.a, rows, cols).noalias() +=
            g * ConstVecMap(values_.data() + op.b, cols).transpose();
        if (op.c_n) VecMap(adjoint_.data() + op.c, rows) += g;
        break;
      }
      case OpKind::kTanh: {
        for (std::uint32_t i = 0; i < op.out_n; ++i) {
          const double y = values_[op.out + i];
          adjoint_[op.a + i] += adjoint_[op.out + i] * (1.0 - y * y);
        }
        break;
      }
    }
  }
}

std::vector<double> Tape::gradient(Var output) const {
  backward(output);
  std::vector<double> out(leaf_ids_.size());
  for (std::size_t i = 0; i < leaf_ids_.size(); ++i) out[i] = adjoint_[leaf_ids_[i]];
  return out;
}

std::vector<double> Tape::gradient(VarRange output) const {
  if (output.size != 1) {
    throw InvalidArgument("Tape::gradient: output must be a scalar, got " +
                          std::to_string(output.size) + " nodes");
  }
  return gradient(output[0]);
}

void Tape::accumulate_gradient(Var output, std::uint32_t first, std::span<double> accum) const {
  backward(output);
  for (std::size_t i = 0; i < accum.size(); ++i) accum[i] += adjoint_[first + i];
}

void Tape::rewind(std::size_t mark) {
  if (mark > values_.size()) throw InvalidArgument("Tape::rewind: mark beyond end");
  while (!ops_.empty() && ops_.back().out >= mark) {
    edge_parent_.resize(ops_.back().edge_begin);
    edge_partial_.resize(ops_.back().edge_begin);
    ops_.pop_back();
  }
  while (!leaf_ids_.empty() && leaf_ids_.back() >= mark) leaf_ids_.pop_back();
  values_.resize(mark);
}

void Tape::clear() { rewind(0); }

std::size_t ParamVector::add(std::string name, std::size_t size) {
  for (const auto& s : layout_)
    if (s.name == name) throw InvalidArgument("ParamVector: duplicate slice " + name);
  const std::size_t offset = values_.size();
  layout_.push_back({std::move(name), offset, size});
  values_.resize(offset + size, 0.0);
  return offset;
}

const ParamVector::Slice& ParamVector::find(const std::string& name) const {
  for (const auto& s : layout_)
    if (s.name == name) return s;
  throw InvalidArgument("ParamVector: no slice named " + name);
}

void ParamVector::validate_layout() const {
  std::size_t cursor = 0;
  for (const auto& s : layout_) {
    if (s.offset != cursor) throw InvalidArgument("ParamVector: gap or overlap at " + s.name);
    cursor += s.size;
  }
  if (cursor != values_.size()) throw InvalidArgument("ParamVector: layout does not cover array");
}

}  // namespace causalflow::ad
