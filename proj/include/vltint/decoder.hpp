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

// Transformer-in-Transformer caption decoder.
//
// Inner stage: a pre-norm masked transformer over the concatenated
// [video rows; text rows] of one event. Outer stage: for every layer, the
// inner output is stacked into a per-layer event memory, and later events read
// that memory position-wise through the hybrid attention mechanism before a
// residual fusion update.
//
// Sequences are always padded to max_video_len + max_text_len so memory
// entries from different events line up position by position.

#pragma once

#include <string>
#include <vector>

#include "vltint/encoder.hpp"
#include "vltint/nn.hpp"
#include "vltint/special_tokens.hpp"
#include "vltint/tensor.hpp"

namespace vltint {

struct DecoderConfig {
  std::size_t d_emb = 32;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t ffn_hidden = 64;
  std::size_t vocab_size = 0;
  std::size_t max_video_len = 4;
  std::size_t max_text_len = 10;

  std::size_t max_positions() const { return max_video_len + max_text_len; }
};

/// (q, k) is true iff query q may attend key k. Video queries see the valid
/// video keys only; text query i sees the valid video keys and text keys <= i.
struct AttentionMask {
  std::size_t video_len = 0;
  std::size_t valid_video = 0;
  std::size_t text_len = 0;
  std::vector<bool> allowed;

  static AttentionMask build(std::size_t valid_video, std::size_t video_len, std::size_t text_len) {
    if (valid_video == 0 || valid_video > video_len) {
      throw ShapeError("attention mask: " + std::to_string(valid_video) + " valid video rows of " +
                       std::to_string(video_len));
    }
    AttentionMask m{video_len, valid_video, text_len, {}};
    std::size_t p = video_len + text_len;
    m.allowed.assign(p * p, false);
    for (std::size_t q = 0; q < p; ++q) {
      for (std::size_t k = 0; k < valid_video; ++k) m.allowed[q * p + k] = true;
      if (q >= video_len) {
        for (std::size_t k = video_len; k <= q; ++k) m.allowed[q * p + k] = true;
      }
    }
    return m;
  }
  std::size_t size() const { return video_len + text_len; }
  bool allows(std::size_t q, std::size_t k) const { return allowed[q * size() + k]; }
  Tensor bias() const { return mask_bias({size(), size()}, allowed); }
};

/// Per-layer stack of previous events' inner states, stored without a record.
class EventMemory {
 public:
  explicit EventMemory(std::size_t n_layers = 0) : layers_(n_layers) {}

  std::size_t n_layers() const { return layers_.size(); }
  std::size_t size() const { return layers_.empty() ? 0 : layers_[0].size(); }
  bool empty() const { return size() == 0; }
  const std::vector<Tensor>& layer(std::size_t l) const { return layers_.at(l); }

  void append(const std::vector<Tensor>& states) {
    if (states.size() != layers_.size()) {
      throw ValidationError("event memory: got " + std::to_string(states.size()) + " layer states for " +
                            std::to_string(layers_.size()) + " layers");
    }
    for (std::size_t l = 0; l < states.size(); ++l) layers_[l].push_back(states[l].detach());
  }

 private:
  std::vector<std::vector<Tensor>> layers_;
};

struct EventOutput {
  Tensor logits;           // [N, V] for the given text positions
  Tensor hidden;           // [L+N padded, d] final-layer states
  Tensor video_embedding;  // [d] mean over valid video rows of the final states
  std::vector<Tensor> inner_states;  // per layer, pre-memory-update
};

struct DecoderLayer {
  LayerNorm ln_attn, ln_ffn;
  MultiHeadAttention attn;
  Mlp ffn;
  SetAttention outer_fuse;
  Mlp outer_mlp;
};

class TinTDecoder {
 public:
  TinTDecoder() = default;
  TinTDecoder(ParameterSet& ps, const std::string& prefix, const DecoderConfig& cfg, Initializer& init) : cfg_(cfg) {
    if (cfg.vocab_size == 0) throw ValidationError("decoder: vocab_size must be positive");
    if (cfg.n_layers == 0) throw ValidationError("decoder: need at least one layer");
    const std::size_t d = cfg.d_emb;
    word_embedding_ = ps.add(prefix + ".word_embedding", init.normal({cfg.vocab_size, d}, 0.1));
    text_mlp_ = Mlp(ps, prefix + ".text_mlp", d, d, d, init, Activation::kGelu);
    type_embedding_ = ps.add(prefix + ".type_embedding", init.normal({2, d}, 0.1));
    pos_embedding_ = ps.add(prefix + ".pos_embedding", init.normal({cfg.max_positions(), d}, 0.1));
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
      std::string p = prefix + ".layer" + std::to_string(l);
      DecoderLayer layer;
      layer.ln_attn = LayerNorm(ps, p + ".ln_attn", d, init);
      layer.attn = MultiHeadAttention(ps, p + ".attn", d, cfg.n_heads, init);
      layer.ln_ffn = LayerNorm(ps, p + ".ln_ffn", d, init);
      layer.ffn = Mlp(ps, p + ".ffn", d, cfg.ffn_hidden, d, init, Activation::kGelu);
      layer.outer_fuse = SetAttention(ps, p + ".outer_fuse", d, init);
      layer.outer_mlp = Mlp(ps, p + ".outer_mlp", d, d, d, init, Activation::kGelu);
      layers_.push_back(std::move(layer));
    }
    final_ln_ = LayerNorm(ps, prefix + ".final_ln", d, init);
    head_ = Linear(ps, prefix + ".head", d, cfg.vocab_size, init);
  }

  const DecoderConfig& config() const { return cfg_; }
  const DecoderLayer& layer(std::size_t l) const { return layers_.at(l); }
  EventMemory new_memory() const { return EventMemory(cfg_.n_layers); }

  /// H^0 = [F^VL; F^text] + F^type + positional rows.
  Tensor build_input(const Tensor& video, const std::vector<std::size_t>& tokens) const {
    if (video.ndim() != 2 || video.dim(1) != cfg_.d_emb) {
      throw ShapeError("build_input: video features " + shape_str(video.shape()) + " need width " +
                       std::to_string(cfg_.d_emb));
    }
    std::size_t l = video.dim(0), n = tokens.size();
    if (l + n > cfg_.max_positions()) {
      throw ValidationError("build_input: sequence length " + std::to_string(l + n) + " exceeds positional table " +
                            std::to_string(cfg_.max_positions()));
    }
    for (auto t : tokens) {
      if (t >= cfg_.vocab_size) throw ValidationError("build_input: token id " + std::to_string(t) + " out of vocabulary");
    }
    Tensor seq = video;
    if (n > 0) seq = concat({video, text_mlp_(embedding(word_embedding_, tokens))}, 0);
    std::vector<std::size_t> types(l + n, 0), positions(l + n);
    std::fill(types.begin() + static_cast<std::ptrdiff_t>(l), types.end(), 1);
    for (std::size_t i = 0; i < l + n; ++i) positions[i] = i;
    return add(add(seq, embedding(type_embedding_, types)), embedding(pos_embedding_, positions));
  }

  /// H~ = MSA(LN(H)) + H;  H- = MLP(LN(H~)) + H~.
  Tensor inner_layer(std::size_t l, const Tensor& h, const Tensor& mask_bias) const {
    const auto& layer = layers_.at(l);
    Tensor mid = add(layer.attn(layer.ln_attn(h), mask_bias), h);
    return add(layer.ffn(layer.ln_ffn(mid)), mid);
  }

  /// Z[p] = HAM({M_t'[p]}, H-[p]) for every position p.
  Tensor outer_context(std::size_t l, const std::vector<Tensor>& memory_layer, const Tensor& inner) const {
    if (memory_layer.empty()) throw ValidationError("outer_context: event memory is empty");
    for (const auto& m : memory_layer) {
      if (m.shape() != inner.shape()) {
        throw ShapeError("outer_context: memory entry " + shape_str(m.shape()) + " vs current " + shape_str(inner.shape()));
      }
    }
    Tensor sets = stack(memory_layer, 1);  // [P, t-1, d]
    return ham_batched(layers_.at(l).outer_fuse, sets, inner);
  }

  /// H = MLP(g([H-; Z])) + H-, with g applied per position over the pair.
  Tensor integrate(std::size_t l, const Tensor& inner, const Tensor& context) const {
    if (inner.shape() != context.shape()) {
      throw ShapeError("integrate: " + shape_str(inner.shape()) + " vs " + shape_str(context.shape()));
    }
    const auto& layer = layers_.at(l);
    Tensor pair = stack({inner, context}, 1);  // [P, 2, d]
    return add(layer.outer_mlp(layer.outer_fuse(pair)), inner);
  }

  /// Runs one event. Video rows are zero-padded to max_video_len and text to
  /// max_text_len; logits are returned for the given text positions only.
  EventOutput forward_event(const Tensor& video, const std::vector<std::size_t>& tokens, EventMemory& memory,
                            bool update_memory = true) const {
    if (memory.n_layers() != cfg_.n_layers) {
      throw ValidationError("forward_event: memory has " + std::to_string(memory.n_layers()) + " layers, decoder " +
                            std::to_string(cfg_.n_layers));
    }
    if (video.ndim() != 2) throw ShapeError("forward_event: video features must be a matrix");
    std::size_t l = video.dim(0), n = tokens.size();
    if (l > cfg_.max_video_len) {
      throw ValidationError("forward_event: " + std::to_string(l) + " snippets exceed max_video_len " +
                            std::to_string(cfg_.max_video_len));
    }
    if (n == 0 || n > cfg_.max_text_len) {
      throw ValidationError("forward_event: text length " + std::to_string(n) + " outside [1, " +
                            std::to_string(cfg_.max_text_len) + "]");
    }
    Tensor padded_video = video;
    if (l < cfg_.max_video_len) {
      padded_video = concat({video, Tensor::zeros({cfg_.max_video_len - l, cfg_.d_emb})}, 0);
    }
    std::vector<std::size_t> padded_tokens = tokens;
    padded_tokens.resize(cfg_.max_text_len, special::kPad);

    Tensor h = build_input(padded_video, padded_tokens);
    Tensor bias = AttentionMask::build(l, cfg_.max_video_len, cfg_.max_text_len).bias();
    EventOutput out;
    for (std::size_t li = 0; li < cfg_.n_layers; ++li) {
      Tensor inner = inner_layer(li, h, bias);
      out.inner_states.push_back(inner);
      if (memory.empty()) {
        h = inner;
      } else {
        h = integrate(li, inner, outer_context(li, memory.layer(li), inner));
      }
    }
    out.hidden = h;
    out.video_embedding = mean(slice(h, 0, 0, l), 0);
    Tensor text = slice(h, 0, cfg_.max_video_len, cfg_.max_video_len + n);
    out.logits = head_(final_ln_(text));
    if (update_memory) memory.append(out.inner_states);
    return out;
  }

  /// Greedy decoding (lowest id wins ties). Returns the generated ids, ending
  /// in eos when it was produced. Memory is updated once, with the completed
  /// event's states.
  std::vector<std::size_t> greedy_decode(const Tensor& video, EventMemory& memory, std::size_t max_len,
                                         std::size_t bos = special::kBos, std::size_t eos = special::kEos) const {
    if (max_len < 1) throw ValidationError("greedy_decode: max_len must be >= 1");
    NoGradGuard no_grad;
    std::vector<std::size_t> input{bos}, generated;
    while (generated.size() < max_len) {
      auto step = forward_event(video, input, memory, false);
      auto row = step.logits.values().subspan((input.size() - 1) * cfg_.vocab_size, cfg_.vocab_size);
      std::size_t best = 0;
      for (std::size_t v = 1; v < row.size(); ++v) {
        if (row[v] > row[best]) best = v;
      }
      generated.push_back(best);
      if (best == eos || input.size() == cfg_.max_text_len) break;
      input.push_back(best);
    }
    forward_event(video, input, memory, true);
    return generated;
  }

 private:
  DecoderConfig cfg_;
  Tensor word_embedding_, type_embedding_, pos_embedding_;
  Mlp text_mlp_;
  std::vector<DecoderLayer> layers_;
  LayerNorm final_ln_;
  Linear head_;
};

}  // namespace vltint
