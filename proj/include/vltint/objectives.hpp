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

// Training objectives: label-smoothed captioning loss with a repetition
// penalty, and the visual-linguistic contrastive loss.

#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "vltint/nn.hpp"
#include "vltint/special_tokens.hpp"
#include "vltint/tensor.hpp"

namespace vltint {

struct LossConfig {
  double lambda = 0.1;
  double label_smoothing = 0.1;
  double rho_init = std::log(1.0 / 0.07);
  double prob_floor = 1e-8;
  std::vector<std::size_t> penalty_excludes{special::kPad, special::kBos, special::kEos};
  bool contrastive = true;  // false: MLE-only ablation

  void validate() const {
    if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
      throw ValidationError("loss: label_smoothing must lie in [0, 1), got " + std::to_string(label_smoothing));
    }
    if (!(lambda >= 0.0)) throw ValidationError("loss: lambda must be >= 0, got " + std::to_string(lambda));
    if (!(prob_floor > 0.0)) throw ValidationError("loss: prob_floor must be positive");
    if (!std::isfinite(rho_init)) throw ValidationError("loss: rho_init must be finite");
  }
};

/// Stand-in caption encoder for f^T: embedding lookup, mean over tokens, MLP.
class CaptionTextEncoder {
 public:
  CaptionTextEncoder() = default;
  CaptionTextEncoder(ParameterSet& ps, const std::string& prefix, std::size_t vocab, std::size_t d, Initializer& init)
      : embedding_(ps.add(prefix + ".embedding", init.normal({vocab, d}, 0.1))),
        mlp_(ps, prefix + ".mlp", d, d, d, init, Activation::kGelu) {}

  const Mlp& mlp() const { return mlp_; }
  const Tensor& embedding_table() const { return embedding_; }

  Tensor operator()(const std::vector<std::size_t>& caption) const {
    if (caption.empty()) throw ValidationError("caption_text_embed: empty caption");
    return mlp_(mean(embedding(embedding_, caption), 0));
  }

 private:
  Tensor embedding_;
  Mlp mlp_;
};

/// tau = -(1/N) sum_i sum_{c in distinct(targets[<i]) \ excludes} log(max(eps, 1 - probs[i][c])).
/// Positions whose target is [PAD] are skipped and excluded from N.
inline Tensor repetition_penalty_tau(const Tensor& probs, const std::vector<std::size_t>& targets,
                                     const std::vector<std::size_t>& excludes, double floor = 1e-8) {
  if (probs.ndim() != 2 || probs.dim(0) != targets.size()) {
    throw ShapeError("tau: probabilities " + shape_str(probs.shape()) + " vs " + std::to_string(targets.size()) +
                     " targets");
  }
  std::size_t vocab = probs.dim(1);
  std::set<std::size_t> excluded(excludes.begin(), excludes.end());
  std::set<std::size_t> history;
  std::vector<std::size_t> picks;
  std::size_t valid = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] == special::kPad) continue;
    ++valid;
    for (auto c : history) picks.push_back(i * vocab + c);
    if (!excluded.count(targets[i])) history.insert(targets[i]);
  }
  if (picks.empty() || valid == 0) return Tensor::scalar(0.0);
  Tensor p = index_select(reshape(probs, {probs.numel(), 1}), picks);
  Tensor terms = log(clamp_min(add_scalar(neg(p), 1.0), floor));
  return scale(sum(terms), -1.0 / static_cast<double>(valid));
}

struct CaptionLoss {
  Tensor total;  // smoothed NLL + lambda * tau
  Tensor nll;
  Tensor tau;
};

/// Label-smoothed cross-entropy over non-pad positions plus lambda * tau.
/// The target keeps 1 - eps of the mass; eps is spread uniformly over the
/// remaining non-pad vocabulary.
inline CaptionLoss captioning_loss(const Tensor& logits, const std::vector<std::size_t>& targets, const LossConfig& cfg) {
  if (logits.ndim() != 2 || logits.dim(0) != targets.size()) {
    throw ShapeError("captioning_loss: logits " + shape_str(logits.shape()) + " vs " + std::to_string(targets.size()) +
                     " targets");
  }
  std::size_t n = targets.size(), vocab = logits.dim(1);
  if (vocab < 3) throw ValidationError("captioning_loss: vocabulary too small for smoothing");
  std::vector<double> q(n * vocab, 0.0);
  std::size_t valid = 0;
  const double eps = cfg.label_smoothing;
  const double spread = eps / static_cast<double>(vocab - 2);
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] == special::kPad) continue;
    if (targets[i] >= vocab) throw ValidationError("captioning_loss: target id out of vocabulary");
    ++valid;
    for (std::size_t v = 0; v < vocab; ++v) q[i * vocab + v] = v == special::kPad ? 0.0 : spread;
    q[i * vocab + targets[i]] = 1.0 - eps;
  }
  if (valid == 0) throw ValidationError("captioning_loss: all positions are padding");
  Tensor logp = log_softmax(logits, -1);
  CaptionLoss out;
  out.nll = scale(sum(mul(logp, Tensor::from({n, vocab}, std::move(q)))), -1.0 / static_cast<double>(valid));
  out.tau = repetition_penalty_tau(exp(logp), targets, cfg.penalty_excludes, cfg.prob_floor);
  out.total = cfg.lambda == 0.0 ? out.nll : add(out.nll, scale(out.tau, cfg.lambda));
  return out;
}

namespace detail {
inline Tensor normalize_rows(const Tensor& x, const char* what) {
  Tensor norms = l2_norm(x, 1);
  for (double v : norms.values()) {
    if (v == 0.0) throw ValidationError(std::string("contrastive_loss: zero-norm ") + what + " embedding");
  }
  return div(x, reshape(norms, {x.dim(0), 1}));
}
}  // namespace detail

/// Pairwise cosine similarities between event embeddings [B, d] and caption
/// embeddings [B, d] -> [B, B].
inline Tensor pair_similarities(const Tensor& events, const Tensor& captions) {
  if (events.ndim() != 2 || events.shape() != captions.shape()) {
    throw ShapeError("contrastive: event embeddings " + shape_str(events.shape()) + " vs caption embeddings " +
                     shape_str(captions.shape()));
  }
  return matmul(detail::normalize_rows(events, "event"), transpose(detail::normalize_rows(captions, "caption")));
}

/// Binary cross-entropy on sigmoid(e^rho * cos(f^N_b1, f^T_b2)), positives on
/// the diagonal, averaged over all B^2 pairs.
inline Tensor contrastive_loss(const Tensor& events, const Tensor& captions, const Tensor& rho) {
  if (rho.numel() != 1 || !std::isfinite(rho.item())) throw ValidationError("contrastive_loss: rho must be a finite scalar");
  Tensor sims = pair_similarities(events, captions);
  std::size_t b = events.dim(0);
  Tensor logits = mul(sims, exp(rho));
  std::vector<double> eye(b * b, 0.0), off(b * b, 1.0);
  for (std::size_t i = 0; i < b; ++i) {
    eye[i * b + i] = 1.0;
    off[i * b + i] = 0.0;
  }
  Tensor pos = mul(softplus(neg(logits)), Tensor::from({b, b}, std::move(eye)));
  Tensor negs = mul(softplus(logits), Tensor::from({b, b}, std::move(off)));
  return scale(sum(add(pos, negs)), 1.0 / static_cast<double>(b * b));
}

struct SimilarityStats {
  double mean_positive = 0.0;
  double mean_negative = 0.0;
};

inline SimilarityStats similarity_stats(const Tensor& events, const Tensor& captions) {
  NoGradGuard no_grad;
  Tensor sims = pair_similarities(events, captions);
  std::size_t b = events.dim(0);
  SimilarityStats s;
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) (i == j ? s.mean_positive : s.mean_negative) += sims.value(i * b + j);
  s.mean_positive /= static_cast<double>(b);
  if (b > 1) s.mean_negative /= static_cast<double>(b * (b - 1));
  return s;
}

struct VLLoss {
  Tensor total;
  Tensor caption;      // mean over events of the captioning loss
  Tensor contrastive;  // undefined when disabled
  double nll = 0.0;
  double tau = 0.0;
};

struct CaptionTarget {
  Tensor logits;
  std::vector<std::size_t> targets;
};

/// L_VL = mean_e L_cap(e) + L_con, or the captioning term alone when the
/// contrastive term is disabled.
inline VLLoss vl_loss(const std::vector<CaptionTarget>& events, const Tensor& event_embeddings,
                      const Tensor& caption_embeddings, const Tensor& rho, const LossConfig& cfg) {
  if (events.empty()) throw ValidationError("vl_loss: no events");
  VLLoss out;
  std::vector<Tensor> caps;
  for (const auto& e : events) {
    auto c = captioning_loss(e.logits, e.targets, cfg);
    out.nll += c.nll.item();
    out.tau += c.tau.item();
    caps.push_back(c.total);
  }
  double inv = 1.0 / static_cast<double>(events.size());
  out.nll *= inv;
  out.tau *= inv;
  out.caption = scale(sum(stack(caps, 0)), inv);
  out.total = out.caption;
  if (cfg.contrastive) {
    out.contrastive = contrastive_loss(event_embeddings, caption_embeddings, rho);
    out.total = add(out.caption, out.contrastive);
  }
  return out;
}

}  // namespace vltint
