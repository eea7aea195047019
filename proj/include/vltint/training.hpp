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

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "vltint/gradcheck.hpp"
#include "vltint/metrics.hpp"
#include "vltint/model.hpp"
#include "vltint/objectives.hpp"

namespace vltint {

struct TrainConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  std::size_t warmup_epochs = 5;
  std::size_t epochs = 30;
  std::size_t batch_size = 4;  // videos
  std::uint64_t seed = 1;
  double grad_clip = 1.0;  // global L2 norm; 0 disables
  double dropout = 0.0;

  /// Full-scale optimizer settings (lr 1e-4); epochs left at the default.
  static TrainConfig full_scale() { return TrainConfig{}; }

  /// Settings that fit the small synthetic benchmarks in a few minutes.
  static TrainConfig desk() {
    TrainConfig c;
    c.lr = 3e-3;
    c.warmup_epochs = 5;
    c.epochs = 300;
    c.batch_size = 4;
    return c;
  }

  void validate() const {
    auto check = [](bool ok, const std::string& msg) {
      if (!ok) throw ValidationError("train config: " + msg);
    };
    check(lr > 0.0, "lr must be > 0");
    check(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "betas must lie in [0, 1)");
    check(adam_eps > 0.0, "adam_eps must be > 0");
    check(weight_decay >= 0.0, "weight_decay must be >= 0");
    check(epochs == 0 || warmup_epochs <= epochs, "warmup_epochs must not exceed epochs");
    check(batch_size >= 1, "batch_size must be >= 1");
    check(grad_clip >= 0.0, "grad_clip must be >= 0");
    check(dropout == 0.0, "dropout is not supported (must be 0)");
  }
};

// ---------------------------------------------------------------------------
// Optimizer

struct AdamState {
  std::vector<std::vector<double>> m, v;
  std::size_t step = 0;
};

/// Linear warmup from 0 over the first warmup_epochs, then constant. `step` is 1-based.
inline double learning_rate(const TrainConfig& cfg, std::size_t step, std::size_t steps_per_epoch) {
  std::size_t warmup = cfg.warmup_epochs * steps_per_epoch;
  if (warmup == 0) return cfg.lr;
  return cfg.lr * std::min(1.0, static_cast<double>(step) / static_cast<double>(warmup));
}

inline bool decays(const std::string& name) {
  auto ends_with = [&](const char* s) {
    std::string suf(s);
    return name.size() >= suf.size() && name.compare(name.size() - suf.size(), suf.size(), suf) == 0;
  };
  return !(ends_with(".bias") || ends_with(".gain") || name == "rho");
}

/// One Adam step with bias correction and decoupled weight decay. Missing
/// gradients count as zero. A non-finite gradient rejects the whole step
/// before anything is modified.
inline void adam_step(ParameterSet& params, AdamState& state, const TrainConfig& cfg, double lr) {
  auto& entries = params.entries();
  for (const auto& [name, t] : entries) {
    for (double g : t.grad()) {
      if (!std::isfinite(g)) throw NumericalError("adam_step: non-finite gradient in '" + name + "'");
    }
  }
  if (state.m.empty()) {
    for (const auto& e : entries) {
      state.m.emplace_back(e.second.numel(), 0.0);
      state.v.emplace_back(e.second.numel(), 0.0);
    }
  }
  if (state.m.size() != entries.size()) throw ValidationError("adam_step: optimizer state does not match parameters");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& [name, param] = entries[i];
    auto values = param.mutable_values();
    auto grad = param.grad();
    const double wd = decays(name) ? cfg.weight_decay : 0.0;
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < values.size(); ++k) {
      double g = grad.empty() ? 0.0 : grad[k];
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
      double update = (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg.adam_eps);
      values[k] -= lr * (update + wd * values[k]);
    }
  }
}

/// Rescales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
inline double clip_grad_norm(ParameterSet& params, double max_norm) {
  double sq = 0.0;
  for (const auto& e : params.entries())
    for (double g : e.second.grad()) sq += g * g;
  double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    double s = max_norm / norm;
    for (auto& e : params.entries()) {
      if (!e.second.has_grad()) continue;
      for (double& g : e.second.mutable_grad()) g *= s;
    }
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Training loop

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double caption = 0.0;      // L_cap
  double contrastive = 0.0;  // L_con (0 when disabled)
  double tau = 0.0;
  double accuracy = 0.0;  // teacher-forced next-token accuracy

  Json to_json() const {
    return {{"epoch", epoch}, {"L_cap", caption}, {"L_con", contrastive}, {"tau", tau}, {"acc", accuracy}, {"loss", loss}};
  }
};

struct BatchResult {
  VLLoss loss;
  std::size_t correct = 0;
  std::size_t predicted = 0;
  Tensor event_embeddings;
  Tensor caption_embeddings;
};

/// Teacher-forced forward over a batch of videos and the combined loss.
/// `replays`, when given, holds one MemoryReplay per video (see forward_video).
inline BatchResult batch_loss(const VLTinTModel& model, const std::vector<const VideoRecord*>& videos,
                              const VocabEmbeddingTable* table, const LossConfig& loss_cfg,
                              std::vector<MemoryReplay>* replays = nullptr) {
  if (replays && replays->size() != videos.size()) {
    throw ValidationError("batch_loss: " + std::to_string(replays->size()) + " memory replays for " +
                          std::to_string(videos.size()) + " videos");
  }
  BatchResult r;
  std::vector<CaptionTarget> targets;
  std::vector<Tensor> event_emb, caption_emb;
  const std::size_t vocab = model.vocab().size();
  for (std::size_t vi = 0; vi < videos.size(); ++vi) {
    const auto* video = videos[vi];
    auto fwd = model.forward_video(*video, table, replays ? &(*replays)[vi] : nullptr);
    for (std::size_t e = 0; e < fwd.events.size(); ++e) {
      const auto& out = fwd.events[e];
      const auto& toks = fwd.captions[e];
      targets.push_back({out.logits, toks.target});
      event_emb.push_back(out.video_embedding);
      caption_emb.push_back(model.text_encoder()(toks.target));
      auto lv = out.logits.values();
      for (std::size_t i = 0; i < toks.target.size(); ++i) {
        auto row = lv.subspan(i * vocab, vocab);
        auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        r.correct += best == toks.target[i] ? 1 : 0;
        ++r.predicted;
      }
    }
  }
  r.event_embeddings = stack(event_emb, 0);
  r.caption_embeddings = stack(caption_emb, 0);
  r.loss = vl_loss(targets, r.event_embeddings, r.caption_embeddings, model.rho(), loss_cfg);
  return r;
}

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t steps = 0;
};

/// Epochs over shuffled video batches. Events inside a video stay in order so
/// the event memory sees them autoregressively. On a non-finite loss the
/// parameters are restored to the last good step and NumericalError is thrown.
inline TrainResult train(VLTinTModel& model, const std::vector<VideoRecord>& videos, const VocabEmbeddingTable* table,
                         const TrainConfig& cfg, const LossConfig& loss_cfg,
                         const std::function<void(const EpochLog&)>& on_epoch = {}) {
  cfg.validate();
  loss_cfg.validate();
  if (videos.empty()) throw ValidationError("train: empty dataset");
  model.check_compatible(videos, table);

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(videos.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t steps_per_epoch = (videos.size() + cfg.batch_size - 1) / cfg.batch_size;
  AdamState state;
  TrainResult result;
  auto& params = model.params();
  std::vector<std::vector<double>> last_good;
  auto snapshot = [&] {
    last_good.clear();
    for (const auto& e : params.entries()) last_good.emplace_back(e.second.values().begin(), e.second.values().end());
  };
  auto restore = [&] {
    for (std::size_t i = 0; i < last_good.size(); ++i) {
      auto& t = params.entries()[i].second;
      std::copy(last_good[i].begin(), last_good[i].end(), t.mutable_values().begin());
    }
  };

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog log;
    log.epoch = epoch;
    std::size_t correct = 0, predicted = 0, batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<const VideoRecord*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) batch.push_back(&videos[order[i]]);
      snapshot();
      params.zero_grad();
      auto br = batch_loss(model, batch, table, loss_cfg);
      double total = br.loss.total.item();
      if (!std::isfinite(total)) {
        restore();
        throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) +
                             "; parameters restored to the last good step");
      }
      backward(br.loss.total);
      clip_grad_norm(params, cfg.grad_clip);
      try {
        adam_step(params, state, cfg, learning_rate(cfg, state.step + 1, steps_per_epoch));
      } catch (const NumericalError&) {
        restore();
        throw;
      }
      log.loss += total;
      log.caption += br.loss.caption.item();
      log.contrastive += br.loss.contrastive.defined() ? br.loss.contrastive.item() : 0.0;
      log.tau += br.loss.tau;
      correct += br.correct;
      predicted += br.predicted;
      ++batches;
      ++result.steps;
    }
    const double inv = 1.0 / static_cast<double>(batches);
    log.loss *= inv;
    log.caption *= inv;
    log.contrastive *= inv;
    log.tau *= inv;
    log.accuracy = predicted ? static_cast<double>(correct) / static_cast<double>(predicted) : 0.0;
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  params.zero_grad();
  return result;
}

/// Teacher-forced accuracy and contrastive similarity statistics over a dataset.
struct TeacherForcedStats {
  double accuracy = 0.0;
  SimilarityStats similarity;
};

inline TeacherForcedStats teacher_forced_stats(const VLTinTModel& model, const std::vector<VideoRecord>& videos,
                                               const VocabEmbeddingTable* table) {
  NoGradGuard no_grad;
  std::vector<const VideoRecord*> all;
  for (const auto& v : videos) all.push_back(&v);
  LossConfig cfg;
  cfg.contrastive = false;
  auto br = batch_loss(model, all, table, cfg);
  TeacherForcedStats s;
  s.accuracy = br.predicted ? static_cast<double>(br.correct) / static_cast<double>(br.predicted) : 0.0;
  s.similarity = similarity_stats(br.event_embeddings, br.caption_embeddings);
  return s;
}

// ---------------------------------------------------------------------------
// Gradient check of the full objective

struct GradcheckReport {
  double worst = 0.0;
  std::string worst_param;
  std::size_t scalars = 0;
};

/// Finite-difference check of the training objective over every model
/// parameter. The event memory is detached in the objective, so each probe
/// replays the memories recorded at the unperturbed point.
inline GradcheckReport objective_gradcheck(VLTinTModel& model, const std::vector<VideoRecord>& videos,
                                           const VocabEmbeddingTable* table, const LossConfig& loss_cfg) {
  std::vector<const VideoRecord*> batch;
  for (const auto& v : videos) batch.push_back(&v);
  std::vector<MemoryReplay> replays(videos.size());
  batch_loss(model, batch, table, loss_cfg, &replays);
  for (auto& r : replays) r.recording = false;
  auto fn = [&] { return batch_loss(model, batch, table, loss_cfg, &replays).loss.total; };
  GradcheckReport rep;
  for (auto& [name, t] : model.params().entries()) {
    Tensor p = t;
    double err = finite_diff_check_leaf(fn, p);
    rep.scalars += p.numel();
    if (err > rep.worst) {
      rep.worst = err;
      rep.worst_param = name;
    }
  }
  model.params().zero_grad();
  return rep;
}

// ---------------------------------------------------------------------------
// Evaluation

struct DecodedVideo {
  std::string video_id;
  std::vector<std::string> sentences;
};

struct Evaluation {
  MetricReport report;
  std::vector<DecodedVideo> decoded;
};

/// Unseen words in held-out references are fine (scoring works on strings), but a
/// manifest sharing no caption token with the checkpoint comes from another corpus.
inline void check_vocabulary(const VLTinTModel& model, const std::vector<VideoRecord>& videos) {
  std::size_t seen = 0, known = 0;
  std::string example;
  for (const auto& v : videos)
    for (const auto& e : v.events)
      for (const auto& t : tokenize(e.caption)) {
        ++seen;
        if (model.vocab().contains(t)) ++known;
        else if (example.empty()) example = "'" + t + "' in video '" + v.video_id + "'";
      }
  if (seen > 0 && known == 0) {
    throw ValidationError("vocabulary mismatch: no caption token is in the checkpoint vocabulary (first: " + example +
                          ")");
  }
}

/// The scene-element table must be the one the checkpoint was trained with.
inline void check_table_tokens(const std::vector<std::string>& trained, const VocabEmbeddingTable& table) {
  if (trained == table.tokens) return;
  std::size_t i = 0;
  while (i < trained.size() && i < table.tokens.size() && trained[i] == table.tokens[i]) ++i;
  std::string detail = i < trained.size() && i < table.tokens.size()
                           ? "token " + std::to_string(i) + " is '" + table.tokens[i] + "', checkpoint has '" + trained[i] + "'"
                           : std::to_string(table.tokens.size()) + " tokens, checkpoint has " + std::to_string(trained.size());
  throw ValidationError("vocabulary mismatch: embedding table differs from training (" + detail + ")");
}

inline std::vector<DecodedVideo> decode_dataset(const VLTinTModel& model, const std::vector<VideoRecord>& videos,
                                                const VocabEmbeddingTable* table, std::size_t max_len) {
  model.check_compatible(videos, table);
  std::vector<DecodedVideo> out;
  for (const auto& v : videos) {
    DecodedVideo d{v.video_id, {}};
    for (const auto& ids : model.decode_video(v, table, max_len)) d.sentences.push_back(model.vocab().decode(ids));
    out.push_back(std::move(d));
  }
  return out;
}

/// Greedy-decodes every event and scores the paragraphs against the captions.
inline Evaluation evaluate(const VLTinTModel& model, const std::vector<VideoRecord>& videos,
                           const VocabEmbeddingTable* table, std::size_t max_len) {
  if (videos.empty()) throw ValidationError("evaluate: empty dataset");
  check_vocabulary(model, videos);
  Evaluation ev;
  ev.decoded = decode_dataset(model, videos, table, max_len);
  std::vector<ParagraphPair> pairs;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    ParagraphPair p;
    for (std::size_t e = 0; e < videos[i].events.size(); ++e) {
      p.hypothesis.push_back(tokenize(ev.decoded[i].sentences[e]));
      p.reference.push_back(tokenize(videos[i].events[e].caption));
    }
    pairs.push_back(std::move(p));
  }
  ev.report = score_paragraphs(pairs);
  return ev;
}

}  // namespace vltint
