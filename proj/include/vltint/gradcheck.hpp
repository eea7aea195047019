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

#pragma once

#include <cmath>
#include <cstring>
#include <functional>
#include <random>
#include <string>

#include "vltint/tensor.hpp"

namespace vltint {

/// Max over coordinates of |analytic - central difference| / max(1, |central difference|)
/// for a scalar function of the leaf `param`, perturbed in place.
///
/// `f` must rebuild its graph from `param` on every call. The leaf's gradient
/// is cleared before and after the check.
inline double finite_diff_check_leaf(const std::function<Tensor()>& f, Tensor& param, double h = 1e-5) {
  if (!param.is_leaf()) throw ValidationError("finite_diff_check: probe tensor must be a leaf");
  auto eval = [&] {
    Tensor y = f();
    if (y.numel() != 1) throw ShapeError("finite_diff_check: f must be scalar-valued, got " + shape_str(y.shape()));
    return y;
  };
  param.zero_grad();
  Tensor y = eval();
  double y0 = y.item();
  double y1 = eval().item();
  if (std::memcmp(&y0, &y1, sizeof(double)) != 0) {
    throw ValidationError("finite_diff_check: f is not deterministic (two evaluations differ)");
  }
  std::vector<double> analytic(param.numel(), 0.0);
  if (y.requires_grad()) {
    backward(y);
    if (param.has_grad()) analytic.assign(param.grad().begin(), param.grad().end());
  }
  param.zero_grad();

  double worst = 0.0;
  auto v = param.mutable_values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    double saved = v[i];
    v[i] = saved + h;
    double fp = eval().item();
    v[i] = saved - h;
    double fm = eval().item();
    v[i] = saved;
    double fd = (fp - fm) / (2.0 * h);
    double err = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd));
    worst = std::max(worst, err);
  }
  return worst;
}

/// Same check for f applied to a copy of `x`.
inline double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h = 1e-5) {
  Tensor leaf = Tensor::from(x.shape(), std::vector<double>(x.values().begin(), x.values().end()), true);
  return finite_diff_check_leaf([&] { return f(leaf); }, leaf, h);
}


/// One differentiable primitive exercised on random operands of fixed shapes.
/// Unary primitives ignore `b`.
struct PrimitiveProbe {
  std::string name;
  Shape a, b;
  std::function<Tensor(const Tensor&, const Tensor&)> f;
  double lo = -1.5, hi = 1.5;  // input range for both operands
};

inline std::vector<PrimitiveProbe> primitive_probes() {
  return {
      {"add", {2, 3}, {3}, [](const Tensor& a, const Tensor& b) { return add(a, b); }},
      {"sub", {2, 3}, {2, 1}, [](const Tensor& a, const Tensor& b) { return sub(a, b); }},
      {"mul", {2, 3, 2}, {3, 1}, [](const Tensor& a, const Tensor& b) { return mul(a, b); }},
      {"div", {3, 2}, {2}, [](const Tensor& a, const Tensor& b) { return div(a, b); }, 0.5, 2.0},
      {"scale", {4}, {1}, [](const Tensor& a, const Tensor&) { return scale(a, -2.5); }},
      {"add_scalar", {4}, {1}, [](const Tensor& a, const Tensor&) { return add_scalar(a, 0.75); }},
      {"exp", {2, 2}, {1}, [](const Tensor& a, const Tensor&) { return exp(a); }},
      {"log", {5}, {1}, [](const Tensor& a, const Tensor&) { return log(a); }, 0.5, 3.0},
      {"sigmoid", {5}, {1}, [](const Tensor& a, const Tensor&) { return sigmoid(a); }},
      {"softplus", {5}, {1}, [](const Tensor& a, const Tensor&) { return softplus(a); }},
      {"tanh", {5}, {1}, [](const Tensor& a, const Tensor&) { return tanh(a); }},
      {"relu", {6}, {1}, [](const Tensor& a, const Tensor&) { return relu(a); }, 0.1, 1.0},
      {"relu_negative", {6}, {1}, [](const Tensor& a, const Tensor&) { return relu(a); }, -1.0, -0.1},
      {"gelu", {6}, {1}, [](const Tensor& a, const Tensor&) { return gelu(a); }},
      {"clamp_min", {6}, {1}, [](const Tensor& a, const Tensor&) { return clamp_min(a, 0.05); }, 0.2, 1.0},
      {"sum", {2, 3}, {1}, [](const Tensor& a, const Tensor&) { return sum(a); }},
      {"mean", {2, 3}, {1}, [](const Tensor& a, const Tensor&) { return mean(a); }},
      {"sum_axis0", {3, 2, 2}, {1}, [](const Tensor& a, const Tensor&) { return sum(a, 0); }},
      {"mean_axis1", {3, 2, 2}, {1}, [](const Tensor& a, const Tensor&) { return mean(a, 1); }},
      {"dot", {5}, {5}, [](const Tensor& a, const Tensor& b) { return dot(a, b); }},
      {"reshape", {2, 3}, {1}, [](const Tensor& a, const Tensor&) { return reshape(a, {3, 2}); }},
      {"permute", {2, 3, 4}, {1}, [](const Tensor& a, const Tensor&) { return permute(a, {2, 0, 1}); }},
      {"transpose", {2, 3, 4}, {1}, [](const Tensor& a, const Tensor&) { return transpose(a); }},
      {"concat", {2, 3}, {1, 3}, [](const Tensor& a, const Tensor& b) { return concat({a, b, a}, 0); }},
      {"concat_axis1", {2, 3}, {2, 2}, [](const Tensor& a, const Tensor& b) { return concat({a, b}, 1); }},
      {"stack", {2, 3}, {2, 3}, [](const Tensor& a, const Tensor& b) { return stack({a, b}, 1); }},
      {"slice", {4, 3}, {1}, [](const Tensor& a, const Tensor&) { return slice(a, 0, 1, 3); }},
      {"index_select", {4, 3}, {1}, [](const Tensor& a, const Tensor&) { return index_select(a, {3, 0, 3}); }},
      {"embedding", {5, 2}, {1}, [](const Tensor& a, const Tensor&) { return embedding(a, {4, 1, 1, 0}); }},
      {"matmul", {3, 4}, {4, 2}, [](const Tensor& a, const Tensor& b) { return matmul(a, b); }},
      {"matmul_batched", {2, 3, 4}, {2, 4, 2}, [](const Tensor& a, const Tensor& b) { return matmul(a, b); }},
      {"matmul_shared", {2, 3, 4}, {4, 2}, [](const Tensor& a, const Tensor& b) { return matmul(a, b); }},
      {"softmax", {2, 5}, {1}, [](const Tensor& a, const Tensor&) { return softmax(a, -1); }},
      {"softmax_axis0", {3, 2}, {1}, [](const Tensor& a, const Tensor&) { return softmax(a, 0); }},
      {"log_softmax", {2, 5}, {1}, [](const Tensor& a, const Tensor&) { return log_softmax(a, -1); }},
      {"layer_norm", {3, 4}, {2, 4},
       [](const Tensor& a, const Tensor& b) { return layer_norm(a, slice(b, 0, 0, 1), slice(b, 0, 1, 2)); }},
      {"l2_norm_rows", {3, 4}, {1}, [](const Tensor& a, const Tensor&) { return l2_norm_rows(a); }},
      {"masked_attention_bias", {3, 3}, {1},
       [](const Tensor& a, const Tensor&) {
         return softmax(add(a, mask_bias({3, 3}, {true, false, false, true, true, false, true, true, true})), -1);
       }},
  };
}

namespace detail {
inline Tensor uniform_tensor(std::mt19937_64& rng, Shape shape, double lo, double hi, bool grad) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(numel_of(shape));
  for (auto& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v), grad);
}
}  // namespace detail

/// Worst error of one probe over both operands. The output is contracted with
/// random weights so upstream gradients are not all ones.
inline double check_probe(const PrimitiveProbe& p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor a = detail::uniform_tensor(rng, p.a, p.lo, p.hi, true);
  Tensor b = detail::uniform_tensor(rng, p.b, p.lo, p.hi, true);
  std::mt19937_64 wrng(seed * 7919 + 13);
  Tensor w;
  auto f = [&] {
    Tensor y = p.f(a, b);
    if (!w.defined()) w = detail::uniform_tensor(wrng, y.shape(), -1.0, 1.0, false);
    return sum(mul(y, w));
  };
  return std::max(finite_diff_check_leaf(f, a), finite_diff_check_leaf(f, b));
}

}  // namespace vltint
