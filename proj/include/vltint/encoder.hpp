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

// Visual-linguistic snippet encoder: environment, agent and scene-element
// modalities, hybrid attention selection, and multi-modal fusion.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vltint/nn.hpp"
#include "vltint/tensor.hpp"

namespace vltint {

/// Row-major real matrix used for ingested features. Zero rows is legal.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t r, std::size_t c, std::vector<double> d) : rows(r), cols(c), data(std::move(d)) {
    if (data.size() != rows * cols) throw ShapeError("feature matrix data does not match " + shape_str({r, c}));
  }
  static FeatureMatrix from_rows(const std::vector<std::vector<double>>& rs, std::size_t cols_if_empty = 0) {
    FeatureMatrix m;
    m.rows = rs.size();
    m.cols = rs.empty() ? cols_if_empty : rs[0].size();
    for (const auto& r : rs) {
      if (r.size() != m.cols) throw ShapeError("ragged feature matrix rows");
      m.data.insert(m.data.end(), r.begin(), r.end());
    }
    return m;
  }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  std::vector<std::vector<double>> to_rows() const {
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < rows; ++i) out.emplace_back(row(i).begin(), row(i).end());
    return out;
  }
  Tensor to_tensor() const { return Tensor::from({rows, cols}, data); }
  // Zero-row matrices are equal whatever their width; a JSON [] carries none.
  bool operator==(const FeatureMatrix& o) const {
    if (rows == 0 && o.rows == 0) return true;
    return rows == o.rows && cols == o.cols && data == o.data;
  }
};

/// One snippet's ingested modality features. The linguistic modality is
/// either precomputed scene-element rows or a frame embedding from which they
/// are selected against a VocabEmbeddingTable.
struct SnippetInput {
  std::vector<double> env_feature;
  FeatureMatrix agent_features;
  std::optional<FeatureMatrix> linguistic;
  std::optional<std::vector<double>> frame_embedding;

  bool operator==(const SnippetInput&) const = default;
};

/// Scene-element vocabulary: text features f^w (m x d_clip) and the text /
/// image projections into a shared embedding space.
struct VocabEmbeddingTable {
  std::vector<std::string> tokens;
  FeatureMatrix text_features;     // m x d_clip
  FeatureMatrix text_projection;   // d_proj x d_clip
  FeatureMatrix image_projection;  // d_proj x d_clip

  std::size_t size() const { return tokens.size(); }
  std::size_t feature_dim() const { return text_features.cols; }

  void validate() const {
    if (tokens.empty()) throw ValidationError("embedding table: no tokens");
    if (text_features.rows != tokens.size()) {
      throw ValidationError("embedding table: text_features has " + std::to_string(text_features.rows) +
                            " rows for " + std::to_string(tokens.size()) + " tokens");
    }
    if (text_projection.cols != text_features.cols || image_projection.cols != text_features.cols) {
      throw ValidationError("embedding table: projection input width must equal feature width " +
                            std::to_string(text_features.cols));
    }
    if (text_projection.rows != image_projection.rows || text_projection.rows == 0) {
      throw ValidationError("embedding table: W_t and W_i must map into the same space");
    }
    for (double v : text_features.data) {
      if (!std::isfinite(v)) throw ValidationError("embedding table: non-finite text feature");
    }
  }
};

struct SceneSelection {
  FeatureMatrix features;            // k x d_clip, raw (unprojected) text features
  std::vector<std::size_t> indices;  // token indices, best first
  std::vector<double> similarities;
};

namespace detail {
inline std::vector<double> project(const FeatureMatrix& w, std::span<const double> x) {
  std::vector<double> out(w.rows, 0.0);
  for (std::size_t i = 0; i < w.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < w.cols; ++j) s += w.data[i * w.cols + j] * x[j];
    out[i] = s;
  }
  return out;
}
inline double cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}
}  // namespace detail

/// Top-k scene elements for a frame: cosine similarity between the projected
/// frame embedding and every projected vocabulary row. Ties go to the lower
/// token index.
inline SceneSelection select_scene_elements(std::span<const double> frame_embedding, const VocabEmbeddingTable& table,
                                            std::size_t k) {
  if (k < 1 || k > table.size()) {
    throw ValidationError("select_scene_elements: k=" + std::to_string(k) + " outside [1, " +
                          std::to_string(table.size()) + "]");
  }
  if (frame_embedding.size() != table.feature_dim()) {
    throw ShapeError("select_scene_elements: frame embedding length " + std::to_string(frame_embedding.size()) +
                     " != " + std::to_string(table.feature_dim()));
  }
  auto image = detail::project(table.image_projection, frame_embedding);
  std::vector<double> sims(table.size());
  for (std::size_t t = 0; t < table.size(); ++t) {
    sims[t] = detail::cosine(image, detail::project(table.text_projection, table.text_features.row(t)));
  }
  std::vector<std::size_t> order(table.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });
  SceneSelection sel;
  sel.features.rows = k;
  sel.features.cols = table.feature_dim();
  for (std::size_t i = 0; i < k; ++i) {
    auto r = table.text_features.row(order[i]);
    sel.features.data.insert(sel.features.data.end(), r.begin(), r.end());
    sel.indices.push_back(order[i]);
    sel.similarities.push_back(sims[order[i]]);
  }
  return sel;
}

// ---------------------------------------------------------------------------
// Hybrid attention mechanism

struct HamSelection {
  std::vector<double> likelihood;  // softmax of ||F_in[i] + f_ref||
  std::vector<bool> selected;
  bool fallback = false;  // strict threshold selected nothing; argmax kept
};

/// Hard selection half of HAM for one set: rows whose softmax-normalized
/// norm after adding the reference exceeds 1/N. If none does, the argmax row
/// (lowest index on ties) is kept.
inline HamSelection ham_select(std::span<const double> rows, std::span<const double> ref, std::size_t n, std::size_t d) {
  HamSelection s;
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double h = rows[i * d + j] + ref[j];
      acc += h * h;
    }
    norms[i] = std::sqrt(acc);
  }
  double mx = *std::max_element(norms.begin(), norms.end());
  double z = 0.0;
  s.likelihood.resize(n);
  for (std::size_t i = 0; i < n; ++i) z += (s.likelihood[i] = std::exp(norms[i] - mx));
  for (auto& c : s.likelihood) c /= z;
  double threshold = 1.0 / static_cast<double>(n);
  s.selected.resize(n);
  bool any = false;
  for (std::size_t i = 0; i < n; ++i) any |= (s.selected[i] = s.likelihood[i] > threshold);
  if (!any) {
    s.fallback = true;
    s.selected[static_cast<std::size_t>(std::max_element(s.likelihood.begin(), s.likelihood.end()) -
                                        s.likelihood.begin())] = true;
  }
  return s;
}

/// HAM over B independent sets: inputs [B, n, d], references [B, d] -> [B, d].
/// The selection is a hard mask; gradients reach the selected inputs through
/// the fusion attention only.
inline Tensor ham_batched(const SetAttention& fuse, const Tensor& inputs, const Tensor& refs,
                          std::vector<HamSelection>* selections = nullptr) {
  if (inputs.ndim() != 3 || refs.ndim() != 2 || refs.dim(0) != inputs.dim(0) || refs.dim(1) != inputs.dim(2)) {
    throw ShapeError("ham: inputs " + shape_str(inputs.shape()) + " incompatible with references " +
                     shape_str(refs.shape()));
  }
  std::size_t b = inputs.dim(0), n = inputs.dim(1), d = inputs.dim(2);
  std::vector<bool> mask(b * n);
  auto iv = inputs.values();
  auto rv = refs.values();
  for (std::size_t i = 0; i < b; ++i) {
    auto sel = ham_select(iv.subspan(i * n * d, n * d), rv.subspan(i * d, d), n, d);
    for (std::size_t j = 0; j < n; ++j) mask[i * n + j] = sel.selected[j];
    if (selections) selections->push_back(std::move(sel));
  }
  return fuse(inputs, &mask);
}

/// HAM(F_in [N, d], f_ref [d]) -> [d].
inline Tensor ham(const SetAttention& fuse, const Tensor& f_in, const Tensor& f_ref, HamSelection* selection = nullptr) {
  if (f_in.ndim() != 2 || f_ref.ndim() != 1 || f_in.dim(1) != f_ref.dim(0)) {
    throw ShapeError("ham: F_in " + shape_str(f_in.shape()) + " incompatible with f_ref " + shape_str(f_ref.shape()));
  }
  std::size_t n = f_in.dim(0), d = f_in.dim(1);
  std::vector<HamSelection> sels;
  Tensor out = ham_batched(fuse, reshape(f_in, {1, n, d}), reshape(f_ref, {1, d}), &sels);
  if (selection) *selection = std::move(sels[0]);
  return reshape(out, {d});
}

// ---------------------------------------------------------------------------
// Encoder

struct Modalities {
  bool env = true;
  bool agent = true;
  bool ling = true;

  bool any() const { return env || agent || ling; }
  bool operator==(const Modalities&) const = default;
};

struct EncoderConfig {
  std::size_t d_env = 16;
  std::size_t d_agent = 16;
  std::size_t d_ling = 16;
  std::size_t d_emb = 32;
  std::size_t hidden = 32;
  std::size_t k = 3;  // scene elements per snippet
  Modalities modalities;
};

class VLEncoder {
 public:
  VLEncoder() = default;
  VLEncoder(ParameterSet& ps, const std::string& prefix, const EncoderConfig& cfg, Initializer& init)
      : cfg_(cfg),
        mlp_env_(ps, prefix + ".mlp_env", cfg.d_env, cfg.hidden, cfg.d_emb, init),
        mlp_agent_(ps, prefix + ".mlp_agent", cfg.d_agent, cfg.hidden, cfg.d_emb, init),
        mlp_ling_(ps, prefix + ".mlp_ling", cfg.d_ling, cfg.hidden, cfg.d_emb, init),
        fuse_(ps, prefix + ".fuse", cfg.d_emb, init) {}

  const EncoderConfig& config() const { return cfg_; }
  const Mlp& mlp_env() const { return mlp_env_; }
  const Mlp& mlp_agent() const { return mlp_agent_; }
  const Mlp& mlp_ling() const { return mlp_ling_; }
  const SetAttention& fusion() const { return fuse_; }

  /// f^e = MLP_env(pooled environment feature).
  Tensor encode_environment(std::span<const double> env) const {
    if (env.size() != cfg_.d_env) {
      throw ShapeError("environment feature length " + std::to_string(env.size()) + " != d_env " +
                       std::to_string(cfg_.d_env));
    }
    return mlp_env_(Tensor::vector({env.begin(), env.end()}));
  }

  /// f^a = HAM(MLP_agent(F^a), f^e); zero vector when no agents were detected.
  Tensor encode_agents(const FeatureMatrix& agents, const Tensor& f_env) const {
    if (agents.rows == 0) return Tensor::zeros({cfg_.d_emb});
    if (agents.cols != cfg_.d_agent) {
      throw ShapeError("agent features have width " + std::to_string(agents.cols) + ", expected " +
                       std::to_string(cfg_.d_agent));
    }
    return ham(fuse_, mlp_agent_(agents.to_tensor()), f_env);
  }

  /// f^l = HAM(MLP_ling(F^l), f^e).
  Tensor encode_linguistic(const FeatureMatrix& scene, const Tensor& f_env) const {
    if (scene.rows == 0 || scene.cols != cfg_.d_ling) {
      throw ShapeError("scene-element features " + shape_str({scene.rows, scene.cols}) + " need width " +
                       std::to_string(cfg_.d_ling) + " and at least one row");
    }
    return ham(fuse_, mlp_ling_(scene.to_tensor()), f_env);
  }

  /// mean(Att([f_1; ...; f_n])) over modality vectors of length d_emb.
  Tensor m2rf(const std::vector<Tensor>& features) const {
    if (features.empty()) throw ValidationError("m2rf: empty feature list");
    Tensor stacked = stack(features, 0);
    return reshape(fuse_(reshape(stacked, {1, features.size(), cfg_.d_emb})), {cfg_.d_emb});
  }

  Tensor encode_snippet(const SnippetInput& s, const VocabEmbeddingTable* table) const {
    const auto& m = cfg_.modalities;
    if (!m.any()) throw ValidationError("encode_snippet: all modalities disabled");
    Tensor f_env = encode_environment(s.env_feature);
    std::vector<Tensor> parts;
    if (m.env) parts.push_back(f_env);
    if (m.agent) parts.push_back(encode_agents(s.agent_features, f_env));
    if (m.ling) parts.push_back(encode_linguistic(scene_elements(s, table), f_env));
    if (parts.size() == 1) return parts[0];
    return m2rf(parts);
  }

  /// F^VL: one row per snippet, order preserved.
  Tensor encode_event(const std::vector<SnippetInput>& snippets, const VocabEmbeddingTable* table) const {
    if (snippets.empty()) throw ValidationError("encode_event: event has no snippets");
    std::vector<Tensor> rows;
    rows.reserve(snippets.size());
    for (const auto& s : snippets) rows.push_back(encode_snippet(s, table));
    return stack(rows, 0);
  }

  FeatureMatrix scene_elements(const SnippetInput& s, const VocabEmbeddingTable* table) const {
    if (s.linguistic) return *s.linguistic;
    if (!s.frame_embedding) throw ValidationError("snippet has neither linguistic features nor a frame embedding");
    if (!table) throw ValidationError("frame-embedding snippet requires a vocabulary embedding table");
    return select_scene_elements(*s.frame_embedding, *table, cfg_.k).features;
  }

 private:
  EncoderConfig cfg_;
  Mlp mlp_env_, mlp_agent_, mlp_ling_;
  SetAttention fuse_;
};

}  // namespace vltint
