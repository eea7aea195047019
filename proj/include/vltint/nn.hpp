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

// Parameterized building blocks shared by the encoder and decoder.

#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "vltint/tensor.hpp"

namespace vltint {

/// Ordered name -> parameter registry. Order is registration order, which
/// fixes checkpoint layout and optimizer iteration.
class ParameterSet {
 public:
  Tensor add(std::string name, Tensor t) {
    for (const auto& [n, _] : entries_) {
      if (n == name) throw ValidationError("duplicate parameter name '" + name + "'");
    }
    entries_.emplace_back(std::move(name), t);
    return t;
  }
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }
  Tensor find(const std::string& name) const {
    for (const auto& [n, t] : entries_) {
      if (n == name) return t;
    }
    throw ValidationError("unknown parameter '" + name + "'");
  }
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.second.numel();
    return n;
  }
  void zero_grad() {
    for (auto& e : entries_) e.second.zero_grad();
  }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

/// Seeded parameter initializer.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  Tensor normal(Shape shape, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> v(numel_of(shape));
    for (auto& x : v) x = dist(rng_);
    return Tensor::from(std::move(shape), std::move(v), true);
  }
  Tensor constant(Shape shape, double value) { return Tensor::full(std::move(shape), value, true); }
  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  Linear() = default;
  Linear(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out, Initializer& init) {
    weight = ps.add(name + ".weight", init.normal({in, out}, std::sqrt(1.0 / static_cast<double>(in))));
    bias = ps.add(name + ".bias", init.constant({out}, 0.0));
  }

  std::size_t in_dim() const { return weight.dim(0); }
  std::size_t out_dim() const { return weight.dim(1); }

  /// x: [..., in] -> [..., out]; a rank-1 input yields a rank-1 output.
  Tensor operator()(const Tensor& x) const {
    if (x.ndim() == 1) return reshape((*this)(reshape(x, {1, x.numel()})), {out_dim()});
    return add(matmul(x, weight), bias);
  }
};

enum class Activation { kRelu, kGelu };

/// Two-layer perceptron.
struct Mlp {
  Linear fc1, fc2;
  Activation act = Activation::kRelu;

  Mlp() = default;
  Mlp(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t hidden, std::size_t out,
      Initializer& init, Activation a = Activation::kRelu)
      : fc1(ps, name + ".fc1", in, hidden, init), fc2(ps, name + ".fc2", hidden, out, init), act(a) {}

  Tensor operator()(const Tensor& x) const {
    Tensor h = fc1(x);
    h = act == Activation::kRelu ? relu(h) : gelu(h);
    return fc2(h);
  }
};

struct LayerNorm {
  Tensor gain, bias;

  LayerNorm() = default;
  LayerNorm(ParameterSet& ps, const std::string& name, std::size_t d, Initializer& init) {
    gain = ps.add(name + ".gain", init.constant({d}, 1.0));
    bias = ps.add(name + ".bias", init.constant({d}, 0.0));
  }
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias, -1, 1e-5); }
};

/// Single-head self-attention over a set followed by a mean over the set:
/// the fusion function shared by multi-modal fusion and the hybrid attention
/// mechanism.
struct SetAttention {
  Linear q, k, v, o;

  SetAttention() = default;
  SetAttention(ParameterSet& ps, const std::string& name, std::size_t d, Initializer& init)
      : q(ps, name + ".q", d, d, init), k(ps, name + ".k", d, d, init), v(ps, name + ".v", d, d, init),
        o(ps, name + ".o", d, d, init) {}

  std::size_t dim() const { return q.in_dim(); }

  /// Per-token attention outputs for x: [B, n, d] -> [B, n, d]. When
  /// `selected` (B*n flags) is given, unselected tokens are masked as keys.
  Tensor attend(const Tensor& x, const std::vector<bool>* selected = nullptr) const {
    if (x.ndim() != 3 || x.dim(2) != dim()) {
      throw ShapeError("set attention expects [B, n, " + std::to_string(dim()) + "], got " + shape_str(x.shape()));
    }
    std::size_t b = x.dim(0), n = x.dim(1);
    Tensor qs = q(x), ks = k(x), vs = v(x);
    Tensor scores = scale(matmul(qs, transpose(ks)), 1.0 / std::sqrt(static_cast<double>(dim())));
    if (selected) scores = add(scores, mask_bias({b, 1, n}, *selected));
    return o(matmul(softmax(scores, -1), vs));
  }

  /// mean(Att(x)) over the set axis, restricted to `selected` tokens when given:
  /// [B, n, d] -> [B, d].
  Tensor operator()(const Tensor& x, const std::vector<bool>* selected = nullptr) const {
    Tensor out = attend(x, selected);
    if (!selected) return mean(out, 1);
    std::size_t b = x.dim(0), n = x.dim(1);
    std::vector<double> w(b * n, 0.0);
    for (std::size_t i = 0; i < b; ++i) {
      std::size_t count = 0;
      for (std::size_t j = 0; j < n; ++j) count += (*selected)[i * n + j] ? 1 : 0;
      if (count == 0) throw ValidationError("set attention: empty selection in set " + std::to_string(i));
      for (std::size_t j = 0; j < n; ++j) w[i * n + j] = (*selected)[i * n + j] ? 1.0 / static_cast<double>(count) : 0.0;
    }
    return sum(mul(out, Tensor::from({b, n, 1}, std::move(w))), 1);
  }
};

/// Multi-head self-attention with an additive [S, S] bias.
struct MultiHeadAttention {
  Linear q, k, v, o;
  std::size_t heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterSet& ps, const std::string& name, std::size_t d, std::size_t n_heads, Initializer& init)
      : q(ps, name + ".q", d, d, init), k(ps, name + ".k", d, d, init), v(ps, name + ".v", d, d, init),
        o(ps, name + ".o", d, d, init), heads(n_heads) {
    if (n_heads == 0 || d % n_heads != 0) {
      throw ValidationError("head count " + std::to_string(n_heads) + " must divide d_emb " + std::to_string(d));
    }
  }

  Tensor operator()(const Tensor& x, const Tensor& bias) const {
    std::size_t s = x.dim(0), d = x.dim(1), dh = d / heads;
    auto split = [&](const Tensor& t) { return permute(reshape(t, {s, heads, dh}), {1, 0, 2}); };
    Tensor qs = split(q(x)), ks = split(k(x)), vs = split(v(x));
    Tensor scores = add(scale(matmul(qs, transpose(ks)), 1.0 / std::sqrt(static_cast<double>(dh))), bias);
    Tensor ctx = matmul(softmax(scores, -1), vs);  // [H, S, dh]
    return o(reshape(permute(ctx, {1, 0, 2}), {s, d}));
  }
};

}  // namespace vltint
