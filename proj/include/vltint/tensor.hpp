// Copyright 2026 The VLTinT-Desk Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense float64 tensors with a dynamic reverse-mode record.
//
// Every op returns a fresh node. A node keeps its inputs (and therefore the
// saved activations it needs) only when at least one input requires a
// gradient, so constants never grow a record. Node ids are handed out from a
// monotonically increasing counter, which makes "descending id" a valid
// reverse topological order for backward().

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "vltint/errors.hpp"

namespace vltint {

using Shape = std::vector<std::size_t>;

inline std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

struct Node;
using NodePtr = std::shared_ptr<Node>;
using BackwardFn = std::function<void(Node&)>;

struct Node {
  std::uint64_t id = 0;
  std::string op;
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<NodePtr> inputs;
  BackwardFn backward;

  std::vector<double>& ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    return grad;
  }
};

namespace detail {
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

inline std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false) {
    for (auto e : shape) {
      if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
    }
    if (values.size() != numel_of(shape)) {
      throw ShapeError("value count " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(shape));
    }
    auto n = std::make_shared<Node>();
    n->id = detail::next_node_id();
    n->op = "leaf";
    n->shape = std::move(shape);
    n->values = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }
  static Tensor full(Shape shape, double v, bool requires_grad = false) {
    auto count = numel_of(shape);
    return from(std::move(shape), std::vector<double>(count, v), requires_grad);
  }
  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), 0.0, requires_grad);
  }
  static Tensor scalar(double v, bool requires_grad = false) {
    return from({}, {v}, requires_grad);
  }
  static Tensor vector(std::vector<double> v, bool requires_grad = false) {
    Shape s{v.size()};
    return from(std::move(s), std::move(v), requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->values.size(); }
  std::size_t dim(int axis) const { return node_->shape[norm_axis(axis)]; }
  std::size_t norm_axis(int axis) const {
    int nd = static_cast<int>(ndim());
    int a = axis < 0 ? axis + nd : axis;
    if (a < 0 || a >= nd) {
      throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
    }
    return static_cast<std::size_t>(a);
  }

  std::span<const double> values() const { return node_->values; }
  // Direct write access, for leaves (parameters, finite-difference probes).
  std::span<double> mutable_values() { return node_->values; }
  double value(std::size_t i) const { return node_->values[i]; }
  double item() const {
    if (numel() != 1) throw ShapeError("item() on non-scalar " + shape_str(shape()));
    return node_->values[0];
  }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.clear(); }

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->inputs.empty(); }
  std::uint64_t id() const { return node_->id; }
  const std::string& op() const { return node_->op; }
  const NodePtr& node() const { return node_; }

  /// Copy of the values with no record attached.
  Tensor detach() const { return from(shape(), node_->values, false); }

 private:
  NodePtr node_;
};

namespace detail {

inline Tensor make_op(std::string op, Shape shape, std::vector<double> values,
                      const std::vector<Tensor>& inputs, BackwardFn backward) {
  auto n = std::make_shared<Node>();
  n->id = next_node_id();
  n->op = std::move(op);
  n->shape = std::move(shape);
  n->values = std::move(values);
  bool rg = grad_mode() && std::any_of(inputs.begin(), inputs.end(),
                                       [](const Tensor& t) { return t.requires_grad(); });
  if (rg) {
    n->requires_grad = true;
    n->inputs.reserve(inputs.size());
    for (const auto& t : inputs) n->inputs.push_back(t.node());
    n->backward = std::move(backward);
  }
  return Tensor(std::move(n));
}

// Accumulation target for input i, or nullptr when that input is constant.
inline double* grad_target(Node& out, std::size_t i) {
  auto& in = *out.inputs[i];
  if (!in.requires_grad) return nullptr;
  return in.ensure_grad().data();
}

struct AxisSplit {
  std::size_t outer, n, inner;
};

inline AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

struct Broadcast {
  Shape out;
  std::shared_ptr<const std::vector<std::size_t>> ia, ib;  // null when same shape
};

inline Broadcast broadcast_plan(const char* op, const Shape& a, const Shape& b) {
  Broadcast plan;
  if (a == b) {
    plan.out = a;
    return plan;
  }
  std::size_t nd = std::max(a.size(), b.size());
  Shape out(nd), sa(nd, 1), sb(nd, 1);
  for (std::size_t i = 0; i < nd; ++i) {
    std::size_t ea = i < nd - a.size() ? 1 : a[i - (nd - a.size())];
    std::size_t eb = i < nd - b.size() ? 1 : b[i - (nd - b.size())];
    if (ea != eb && ea != 1 && eb != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                       shape_str(b));
    }
    out[i] = std::max(ea, eb);
    sa[i] = ea;
    sb[i] = eb;
  }
  // Row-major strides with zero stride on broadcast dims.
  std::vector<std::size_t> stride_a(nd, 0), stride_b(nd, 0);
  std::size_t acc_a = 1, acc_b = 1;
  for (std::size_t i = nd; i-- > 0;) {
    stride_a[i] = sa[i] == 1 ? 0 : acc_a;
    stride_b[i] = sb[i] == 1 ? 0 : acc_b;
    acc_a *= sa[i];
    acc_b *= sb[i];
  }
  std::size_t total = numel_of(out);
  std::vector<std::size_t> ia(total), ib(total), counter(nd, 0);
  std::size_t oa = 0, ob = 0;
  for (std::size_t k = 0; k < total; ++k) {
    ia[k] = oa;
    ib[k] = ob;
    for (std::size_t d = nd; d-- > 0;) {
      if (++counter[d] < out[d]) {
        oa += stride_a[d];
        ob += stride_b[d];
        break;
      }
      oa -= stride_a[d] * (out[d] - 1);
      ob -= stride_b[d] * (out[d] - 1);
      counter[d] = 0;
    }
  }
  plan.out = std::move(out);
  plan.ia = std::make_shared<const std::vector<std::size_t>>(std::move(ia));
  plan.ib = std::make_shared<const std::vector<std::size_t>>(std::move(ib));
  return plan;
}

// f(x, y) -> z; da(x, y, z) = dz/dx; db(x, y, z) = dz/dy.
template <class F, class DA, class DB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, F f, DA da, DB db) {
  auto plan = broadcast_plan(op, a.shape(), b.shape());
  auto av = a.values();
  auto bv = b.values();
  std::size_t total = numel_of(plan.out);
  std::vector<double> out(total);
  if (!plan.ia) {
    for (std::size_t k = 0; k < total; ++k) out[k] = f(av[k], bv[k]);
  } else {
    const auto& ia = *plan.ia;
    const auto& ib = *plan.ib;
    for (std::size_t k = 0; k < total; ++k) out[k] = f(av[ia[k]], bv[ib[k]]);
  }
  auto ia = plan.ia;
  auto ib = plan.ib;
  return make_op(op, plan.out, std::move(out), {a, b}, [ia, ib, da, db](Node& o) {
    const auto& x = o.inputs[0]->values;
    const auto& y = o.inputs[1]->values;
    double* gx = grad_target(o, 0);
    double* gy = grad_target(o, 1);
    for (std::size_t k = 0; k < o.values.size(); ++k) {
      std::size_t i = ia ? (*ia)[k] : k;
      std::size_t j = ib ? (*ib)[k] : k;
      double g = o.grad[k];
      if (gx) gx[i] += g * da(x[i], y[j], o.values[k]);
      if (gy) gy[j] += g * db(x[i], y[j], o.values[k]);
    }
  });
}

// f(x) -> y; df(x, y) = dy/dx.
template <class F, class DF>
Tensor unary(const char* op, const Tensor& x, F f, DF df) {
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t k = 0; k < xv.size(); ++k) out[k] = f(xv[k]);
  return make_op(op, x.shape(), std::move(out), {x}, [df](Node& o) {
    const auto& xs = o.inputs[0]->values;
    double* gx = grad_target(o, 0);
    for (std::size_t k = 0; k < o.values.size(); ++k) gx[k] += o.grad[k] * df(xs[k], o.values[k]);
  });
}

}  // namespace detail

/// Disables recording on this thread for the guard's lifetime (evaluation,
/// decoding).
class NoGradGuard {
 public:
  NoGradGuard() : saved_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = saved_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};

// ---------------------------------------------------------------------------
// Elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  return detail::binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double x, double y, double) { return -x / (y * y); });
}

inline Tensor scale(const Tensor& x, double c) {
  return detail::unary(
      "scale", x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

inline Tensor add_scalar(const Tensor& x, double c) {
  return detail::unary(
      "add_scalar", x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

inline Tensor neg(const Tensor& x) { return scale(x, -1.0); }

inline Tensor exp(const Tensor& x) {
  return detail::unary(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

inline Tensor log(const Tensor& x) {
  for (double v : x.values()) {
    if (!(v > 0.0)) throw NumericalError("log: non-positive input " + std::to_string(v));
  }
  return detail::unary(
      "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

/// log(1 + e^x), stable for large |x|.
inline Tensor softplus(const Tensor& x) {
  return detail::unary(
      "softplus", x,
      [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
      [](double v, double) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        double e = std::exp(v);
        return e / (1.0 + e);
      });
}

inline Tensor tanh(const Tensor& x) {
  return detail::unary(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

inline Tensor relu(const Tensor& x) {
  return detail::unary(
      "relu", x, [](double v) { return v > 0 ? v : 0.0; },
      [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

/// tanh approximation of GELU.
inline Tensor gelu(const Tensor& x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  return detail::unary(
      "gelu", x,
      [](double v) { return 0.5 * v * (1.0 + std::tanh(c * (v + 0.044715 * v * v * v))); },
      [](double v, double) {
        double u = c * (v + 0.044715 * v * v * v);
        double t = std::tanh(u);
        double du = c * (1.0 + 3.0 * 0.044715 * v * v);
        return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
      });
}

/// max(x, lo); the gradient is zero where the floor is active.
inline Tensor clamp_min(const Tensor& x, double lo) {
  return detail::unary(
      "clamp_min", x, [lo](double v) { return v > lo ? v : lo; },
      [lo](double v, double) { return v > lo ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return detail::make_op("sum", {}, {s}, {x}, [](Node& o) {
    double* gx = detail::grad_target(o, 0);
    for (std::size_t k = 0; k < o.inputs[0]->values.size(); ++k) gx[k] += o.grad[0];
  });
}

inline Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

/// Sum over one axis; the axis is removed from the shape.
inline Tensor sum(const Tensor& x, int axis) {
  auto ax = x.norm_axis(axis);
  auto s = detail::split_axis(x.shape(), ax);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(ax));
  auto xv = x.values();
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t j = 0; j < s.n; ++j)
      for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += xv[(o * s.n + j) * s.inner + i];
  return detail::make_op("sum_axis", std::move(out_shape), std::move(out), {x}, [s](Node& o) {
    double* gx = detail::grad_target(o, 0);
    for (std::size_t a = 0; a < s.outer; ++a)
      for (std::size_t j = 0; j < s.n; ++j)
        for (std::size_t i = 0; i < s.inner; ++i) gx[(a * s.n + j) * s.inner + i] += o.grad[a * s.inner + i];
  });
}

inline Tensor mean(const Tensor& x, int axis) {
  return scale(sum(x, axis), 1.0 / static_cast<double>(x.dim(axis)));
}

inline Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("dot: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  return sum(mul(a, b));
}

// ---------------------------------------------------------------------------
// Shape manipulation

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (numel_of(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> v(x.values().begin(), x.values().end());
  return detail::make_op("reshape", std::move(shape), std::move(v), {x}, [](Node& o) {
    double* gx = detail::grad_target(o, 0);
    for (std::size_t k = 0; k < o.grad.size(); ++k) gx[k] += o.grad[k];
  });
}

inline Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const auto& in = x.shape();
  std::size_t nd = in.size();
  if (axes.size() != nd) throw ShapeError("permute: axis count mismatch for " + shape_str(in));
  std::vector<bool> seen(nd, false);
  for (auto a : axes) {
    if (a >= nd || seen[a]) throw ShapeError("permute: invalid axis order for " + shape_str(in));
    seen[a] = true;
  }
  std::vector<std::size_t> in_stride(nd, 1);
  for (std::size_t i = nd; i-- > 1;) in_stride[i - 1] = in_stride[i] * in[i];
  Shape out(nd);
  for (std::size_t i = 0; i < nd; ++i) out[i] = in[axes[i]];
  std::size_t total = x.numel();
  auto map = std::make_shared<std::vector<std::size_t>>(total);
  std::vector<std::size_t> counter(nd, 0);
  std::size_t off = 0;
  for (std::size_t k = 0; k < total; ++k) {
    (*map)[k] = off;
    for (std::size_t d = nd; d-- > 0;) {
      if (++counter[d] < out[d]) {
        off += in_stride[axes[d]];
        break;
      }
      off -= in_stride[axes[d]] * (out[d] - 1);
      counter[d] = 0;
    }
  }
  auto xv = x.values();
  std::vector<double> v(total);
  for (std::size_t k = 0; k < total; ++k) v[k] = xv[(*map)[k]];
  return detail::make_op("permute", std::move(out), std::move(v), {x}, [map](Node& o) {
    double* gx = detail::grad_target(o, 0);
    for (std::size_t k = 0; k < o.grad.size(); ++k) gx[(*map)[k]] += o.grad[k];
  });
}

/// Swaps the last two axes.
inline Tensor transpose(const Tensor& x) {
  if (x.ndim() < 2) throw ShapeError("transpose needs rank >= 2, got " + shape_str(x.shape()));
  std::vector<std::size_t> axes(x.ndim());
  std::iota(axes.begin(), axes.end(), 0);
  std::swap(axes[x.ndim() - 1], axes[x.ndim() - 2]);
  return permute(x, axes);
}

inline Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: empty input list");
  auto ax = parts[0].norm_axis(axis);
  Shape out_shape = parts[0].shape();
  std::size_t total_n = 0;
  for (const auto& p : parts) {
    if (p.ndim() != out_shape.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t d = 0; d < out_shape.size(); ++d) {
      if (d != ax && p.shape()[d] != out_shape[d]) {
        throw ShapeError("concat: " + shape_str(p.shape()) + " incompatible with " +
                         shape_str(parts[0].shape()));
      }
    }
    total_n += p.shape()[ax];
  }
  out_shape[ax] = total_n;
  auto s = detail::split_axis(out_shape, ax);
  std::vector<double> out(numel_of(out_shape));
  auto offsets = std::make_shared<std::vector<std::size_t>>();
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets->push_back(off);
    std::size_t n = p.shape()[ax];
    auto pv = p.values();
    for (std::size_t o = 0; o < s.outer; ++o)
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(o * n * s.inner), n * s.inner,
                  out.begin() + static_cast<std::ptrdiff_t>((o * total_n + off) * s.inner));
    off += n;
  }
  return detail::make_op("concat", out_shape, std::move(out), parts, [offsets, s, total_n, ax](Node& o) {
    for (std::size_t i = 0; i < o.inputs.size(); ++i) {
      double* g = detail::grad_target(o, i);
      if (!g) continue;
      std::size_t n = o.inputs[i]->shape[ax];
      std::size_t off = (*offsets)[i];
      for (std::size_t a = 0; a < s.outer; ++a)
        for (std::size_t k = 0; k < n * s.inner; ++k)
          g[a * n * s.inner + k] += o.grad[(a * total_n + off) * s.inner + k];
    }
  });
}

/// Stacks equal-shaped tensors along a new axis.
inline Tensor stack(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("stack: empty input list");
  int nd = static_cast<int>(parts[0].ndim()) + 1;
  int ax = axis < 0 ? axis + nd : axis;
  if (ax < 0 || ax >= nd) throw ShapeError("stack: axis out of range");
  std::vector<Tensor> expanded;
  expanded.reserve(parts.size());
  for (const auto& p : parts) {
    if (p.shape() != parts[0].shape()) {
      throw ShapeError("stack: " + shape_str(p.shape()) + " vs " + shape_str(parts[0].shape()));
    }
    Shape s = p.shape();
    s.insert(s.begin() + ax, 1);
    expanded.push_back(reshape(p, s));
  }
  return concat(expanded, ax);
}

inline Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end) {
  auto ax = x.norm_axis(axis);
  if (begin >= end || end > x.shape()[ax]) {
    throw ShapeError("slice [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of range for " + shape_str(x.shape()));
  }
  auto s = detail::split_axis(x.shape(), ax);
  std::size_t n = end - begin;
  Shape out_shape = x.shape();
  out_shape[ax] = n;
  auto xv = x.values();
  std::vector<double> out(s.outer * n * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o)
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>((o * s.n + begin) * s.inner), n * s.inner,
                out.begin() + static_cast<std::ptrdiff_t>(o * n * s.inner));
  return detail::make_op("slice", std::move(out_shape), std::move(out), {x}, [s, n, begin](Node& o) {
    double* g = detail::grad_target(o, 0);
    for (std::size_t a = 0; a < s.outer; ++a)
      for (std::size_t k = 0; k < n * s.inner; ++k) g[(a * s.n + begin) * s.inner + k] += o.grad[a * n * s.inner + k];
  });
}

/// Gathers rows (axis 0). Doubles as embedding lookup; repeated indices
/// accumulate gradient.
inline Tensor index_select(const Tensor& x, const std::vector<std::size_t>& rows) {
  if (x.ndim() < 1) throw ShapeError("index_select on a scalar");
  if (rows.empty()) throw ShapeError("index_select: empty index list");
  std::size_t n = x.shape()[0];
  std::size_t row = x.numel() / n;
  for (auto r : rows) {
    if (r >= n) {
      throw ShapeError("index_select: row " + std::to_string(r) + " out of range for " + shape_str(x.shape()));
    }
  }
  Shape out_shape = x.shape();
  out_shape[0] = rows.size();
  auto xv = x.values();
  std::vector<double> out(rows.size() * row);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(rows[i] * row), row,
                out.begin() + static_cast<std::ptrdiff_t>(i * row));
  auto idx = std::make_shared<const std::vector<std::size_t>>(rows);
  return detail::make_op("index_select", std::move(out_shape), std::move(out), {x}, [idx, row](Node& o) {
    double* g = detail::grad_target(o, 0);
    for (std::size_t i = 0; i < idx->size(); ++i)
      for (std::size_t k = 0; k < row; ++k) g[(*idx)[i] * row + k] += o.grad[i * row + k];
  });
}

inline Tensor embedding(const Tensor& table, const std::vector<std::size_t>& ids) {
  if (table.ndim() != 2) throw ShapeError("embedding table must be 2-D, got " + shape_str(table.shape()));
  return index_select(table, ids);
}

// ---------------------------------------------------------------------------
// Linear algebra

namespace detail {
// c[m x n] += a[m x k] * b[k x n]
inline void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* br = b + p * n;
      double* cr = c + i * n;
      for (std::size_t j = 0; j < n; ++j) cr[j] += av * br[j];
    }
}
// c[m x k] += g[m x n] * b^T  (b is k x n)
inline void gemm_acc_bt(const double* g, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      double s = 0.0;
      const double* gr = g + i * n;
      const double* br = b + p * n;
      for (std::size_t j = 0; j < n; ++j) s += gr[j] * br[j];
      c[i * k + p] += s;
    }
}
// c[k x n] += a^T * g  (a is m x k, g is m x n)
inline void gemm_acc_at(const double* a, const double* g, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* gr = g + i * n;
      double* cr = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cr[j] += av * gr[j];
    }
}
}  // namespace detail

/// a[..., m, k] x b[k, n] (shared right operand) or a[..., m, k] x b[..., k, n]
/// with identical leading extents.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() < 2 || b.ndim() < 2) {
    throw ShapeError("matmul: operands must have rank >= 2, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  std::size_t m = a.dim(-2), k = a.dim(-1);
  std::size_t kb = b.dim(-2), n = b.dim(-1);
  bool shared = b.ndim() == 2;
  bool batch_ok = shared || (a.ndim() == b.ndim() &&
                             std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin()));
  if (k != kb || !batch_ok) {
    throw ShapeError("matmul: shape mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::size_t batch = a.numel() / (m * k);
  Shape out_shape = a.shape();
  out_shape.back() = n;
  std::vector<double> out(batch * m * n, 0.0);
  auto av = a.values();
  auto bv = b.values();
  if (shared) {
    detail::gemm_acc(av.data(), bv.data(), out.data(), batch * m, k, n);
  } else {
    for (std::size_t t = 0; t < batch; ++t)
      detail::gemm_acc(av.data() + t * m * k, bv.data() + t * k * n, out.data() + t * m * n, m, k, n);
  }
  return detail::make_op("matmul", std::move(out_shape), std::move(out), {a, b},
                         [shared, batch, m, k, n](Node& o) {
                           const double* x = o.inputs[0]->values.data();
                           const double* y = o.inputs[1]->values.data();
                           double* gx = detail::grad_target(o, 0);
                           double* gy = detail::grad_target(o, 1);
                           const double* g = o.grad.data();
                           if (shared) {
                             if (gx) detail::gemm_acc_bt(g, y, gx, batch * m, k, n);
                             if (gy) detail::gemm_acc_at(x, g, gy, batch * m, k, n);
                             return;
                           }
                           for (std::size_t t = 0; t < batch; ++t) {
                             if (gx) detail::gemm_acc_bt(g + t * m * n, y + t * k * n, gx + t * m * k, m, k, n);
                             if (gy) detail::gemm_acc_at(x + t * m * k, g + t * m * n, gy + t * k * n, m, k, n);
                           }
                         });
}

// ---------------------------------------------------------------------------
// Normalization and attention helpers

namespace detail {
inline void require_finite(const char* op, std::span<const double> v) {
  for (double x : v) {
    if (std::isnan(x)) throw NumericalError(std::string(op) + ": NaN input");
  }
}
}  // namespace detail

inline Tensor softmax(const Tensor& x, int axis = -1) {
  detail::require_finite("softmax", x.values());
  auto s = detail::split_axis(x.shape(), x.norm_axis(axis));
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      auto at = [&](std::size_t j) { return (o * s.n + j) * s.inner + i; };
      double mx = xv[at(0)];
      for (std::size_t j = 1; j < s.n; ++j) mx = std::max(mx, xv[at(j)]);
      double z = 0.0;
      for (std::size_t j = 0; j < s.n; ++j) z += (out[at(j)] = std::exp(xv[at(j)] - mx));
      for (std::size_t j = 0; j < s.n; ++j) out[at(j)] /= z;
    }
  return detail::make_op("softmax", x.shape(), std::move(out), {x}, [s](Node& o) {
    double* g = detail::grad_target(o, 0);
    for (std::size_t a = 0; a < s.outer; ++a)
      for (std::size_t i = 0; i < s.inner; ++i) {
        auto at = [&](std::size_t j) { return (a * s.n + j) * s.inner + i; };
        double dotp = 0.0;
        for (std::size_t j = 0; j < s.n; ++j) dotp += o.grad[at(j)] * o.values[at(j)];
        for (std::size_t j = 0; j < s.n; ++j) g[at(j)] += o.values[at(j)] * (o.grad[at(j)] - dotp);
      }
  });
}

inline Tensor log_softmax(const Tensor& x, int axis = -1) {
  detail::require_finite("log_softmax", x.values());
  auto s = detail::split_axis(x.shape(), x.norm_axis(axis));
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      auto at = [&](std::size_t j) { return (o * s.n + j) * s.inner + i; };
      double mx = xv[at(0)];
      for (std::size_t j = 1; j < s.n; ++j) mx = std::max(mx, xv[at(j)]);
      double z = 0.0;
      for (std::size_t j = 0; j < s.n; ++j) z += std::exp(xv[at(j)] - mx);
      double lz = mx + std::log(z);
      for (std::size_t j = 0; j < s.n; ++j) out[at(j)] = xv[at(j)] - lz;
    }
  return detail::make_op("log_softmax", x.shape(), std::move(out), {x}, [s](Node& o) {
    double* g = detail::grad_target(o, 0);
    for (std::size_t a = 0; a < s.outer; ++a)
      for (std::size_t i = 0; i < s.inner; ++i) {
        auto at = [&](std::size_t j) { return (a * s.n + j) * s.inner + i; };
        double gs = 0.0;
        for (std::size_t j = 0; j < s.n; ++j) gs += o.grad[at(j)];
        for (std::size_t j = 0; j < s.n; ++j) g[at(j)] += o.grad[at(j)] - std::exp(o.values[at(j)]) * gs;
      }
  });
}

/// Normalizes each slice along `axis` to zero mean and unit (population)
/// variance, then applies gain and bias (both of length dim(axis)).
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, int axis = -1,
                         double eps = 1e-5) {
  auto ax = x.norm_axis(axis);
  auto s = detail::split_axis(x.shape(), ax);
  if (s.n < 2) throw ShapeError("layer_norm: axis extent must be >= 2, got " + shape_str(x.shape()));
  if (gain.numel() != s.n || bias.numel() != s.n) {
    throw ShapeError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                     " do not match axis extent of " + shape_str(x.shape()));
  }
  auto xv = x.values();
  auto gv = gain.values();
  auto bv = bias.values();
  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  auto rstd = std::make_shared<std::vector<double>>(s.outer * s.inner);
  std::vector<double> out(xv.size());
  const double inv_n = 1.0 / static_cast<double>(s.n);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      auto at = [&](std::size_t j) { return (o * s.n + j) * s.inner + i; };
      double mu = 0.0;
      for (std::size_t j = 0; j < s.n; ++j) mu += xv[at(j)];
      mu *= inv_n;
      double var = 0.0;
      for (std::size_t j = 0; j < s.n; ++j) var += (xv[at(j)] - mu) * (xv[at(j)] - mu);
      var *= inv_n;
      double r = 1.0 / std::sqrt(var + eps);
      (*rstd)[o * s.inner + i] = r;
      for (std::size_t j = 0; j < s.n; ++j) {
        double h = (xv[at(j)] - mu) * r;
        (*xhat)[at(j)] = h;
        out[at(j)] = gv[j] * h + bv[j];
      }
    }
  return detail::make_op("layer_norm", x.shape(), std::move(out), {x, gain, bias},
                         [s, xhat, rstd, inv_n](Node& o) {
                           double* gx = detail::grad_target(o, 0);
                           double* gg = detail::grad_target(o, 1);
                           double* gb = detail::grad_target(o, 2);
                           const auto& gain_v = o.inputs[1]->values;
                           for (std::size_t a = 0; a < s.outer; ++a)
                             for (std::size_t i = 0; i < s.inner; ++i) {
                               auto at = [&](std::size_t j) { return (a * s.n + j) * s.inner + i; };
                               double m1 = 0.0, m2 = 0.0;
                               for (std::size_t j = 0; j < s.n; ++j) {
                                 double dh = o.grad[at(j)] * gain_v[j];
                                 m1 += dh;
                                 m2 += dh * (*xhat)[at(j)];
                                 if (gg) gg[j] += o.grad[at(j)] * (*xhat)[at(j)];
                                 if (gb) gb[j] += o.grad[at(j)];
                               }
                               if (!gx) continue;
                               m1 *= inv_n;
                               m2 *= inv_n;
                               double r = (*rstd)[a * s.inner + i];
                               for (std::size_t j = 0; j < s.n; ++j) {
                                 double dh = o.grad[at(j)] * gain_v[j];
                                 gx[at(j)] += r * (dh - m1 - (*xhat)[at(j)] * m2);
                               }
                             }
                         });
}

/// Euclidean norm of each slice along `axis` (default: rows of a matrix).
/// The subgradient at the origin is taken as zero.
inline Tensor l2_norm(const Tensor& x, int axis = -1) {
  auto ax = x.norm_axis(axis);
  auto s = detail::split_axis(x.shape(), ax);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(ax));
  auto xv = x.values();
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < s.n; ++j) {
        double v = xv[(o * s.n + j) * s.inner + i];
        acc += v * v;
      }
      out[o * s.inner + i] = std::sqrt(acc);
    }
  return detail::make_op("l2_norm", std::move(out_shape), std::move(out), {x}, [s](Node& o) {
    double* g = detail::grad_target(o, 0);
    const auto& xs = o.inputs[0]->values;
    for (std::size_t a = 0; a < s.outer; ++a)
      for (std::size_t i = 0; i < s.inner; ++i) {
        double nrm = o.values[a * s.inner + i];
        if (nrm == 0.0) continue;
        double gn = o.grad[a * s.inner + i] / nrm;
        for (std::size_t j = 0; j < s.n; ++j) {
          std::size_t k = (a * s.n + j) * s.inner + i;
          g[k] += gn * xs[k];
        }
      }
  });
}

inline Tensor l2_norm_rows(const Tensor& x) {
  if (x.ndim() != 2) throw ShapeError("l2_norm_rows expects a matrix, got " + shape_str(x.shape()));
  return l2_norm(x, 1);
}

/// Constant additive attention bias: 0 where `allowed`, `masked_value` elsewhere.
inline Tensor mask_bias(const Shape& shape, const std::vector<bool>& allowed, double masked_value = -1e9) {
  if (allowed.size() != numel_of(shape)) throw ShapeError("mask_bias: mask size does not match " + shape_str(shape));
  std::vector<double> v(allowed.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = allowed[i] ? 0.0 : masked_value;
  return Tensor::from(shape, std::move(v));
}

// ---------------------------------------------------------------------------
// Backward pass

struct RecordEntry {
  std::string op;
  std::vector<std::uint64_t> inputs;
  std::uint64_t output;
};

namespace detail {
// All recorded ancestors of `root` (inclusive), in descending id order.
inline std::vector<Node*> reverse_topological(Node* root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root};
  seen.insert(root);
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& in : n->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->id > b->id; });
  return order;
}
}  // namespace detail

/// The ops that produced `t`, inputs before consumers.
inline std::vector<RecordEntry> computation_record(const Tensor& t) {
  auto order = detail::reverse_topological(t.node().get());
  std::vector<RecordEntry> out;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->inputs.empty()) continue;
    RecordEntry e{(*it)->op, {}, (*it)->id};
    for (const auto& in : (*it)->inputs) e.inputs.push_back(in->id);
    out.push_back(std::move(e));
  }
  return out;
}

/// Accumulates d(loss)/d(leaf) into every recorded leaf that requires a
/// gradient. Leaf gradients accumulate across calls; call zero_grad() on
/// parameters between steps.
inline void backward(const Tensor& loss) {
  if (loss.numel() != 1) throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  if (!loss.requires_grad()) throw ValidationError("backward: loss does not depend on any gradient-requiring tensor");
  auto order = detail::reverse_topological(loss.node().get());
  for (Node* n : order) {
    if (!n->inputs.empty()) n->grad.assign(n->values.size(), 0.0);
  }
  loss.node()->ensure_grad()[0] += 1.0;
  for (Node* n : order) {
    if (n->backward) n->backward(*n);
  }
}

}  // namespace vltint
