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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "harness.hpp"
#include "oracles.hpp"

using namespace vltint;

namespace {

std::vector<std::vector<double>> param_values(const VLTinTModel& m) {
  std::vector<std::vector<double>> out;
  for (const auto& e : m.params().entries()) out.emplace_back(e.second.values().begin(), e.second.values().end());
  return out;
}

struct World {
  SyntheticDataset ds;
  VLTinTModel model;
  explicit World(std::size_t n_videos = 4, std::uint64_t seed = 7)
      : ds(make(n_videos, seed)), model(harness::model_for(harness::tiny_world()), build_vocab(captions_of(ds.train))) {}
  static SyntheticDataset make(std::size_t n, std::uint64_t seed) {
    auto w = harness::tiny_world(4, n);
    w.seed = seed;
    return generate_synthetic(w);
  }
};

TrainConfig quick(std::size_t epochs) {
  TrainConfig c = TrainConfig::desk();
  c.epochs = epochs;
  c.warmup_epochs = std::min<std::size_t>(2, epochs);
  c.batch_size = 2;
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// Optimizer

TEST(Adam, FirstStepClosedForm) {
  ParameterSet ps;
  Tensor w = ps.add("lin.weight", Tensor::from({3}, {0.5, -1.0, 2.0}, true));
  Tensor b = ps.add("lin.bias", Tensor::from({2}, {0.25, -0.75}, true));
  backward(add(sum(w), sum(b)));  // unit gradients
  TrainConfig cfg;
  AdamState st;
  const double lr = 0.01;
  adam_step(ps, st, cfg, lr);
  // m_hat = v_hat = 1, so the Adam direction is 1 / (1 + eps).
  const double dir = 1.0 / (1.0 + cfg.adam_eps);
  std::vector<double> w0{0.5, -1.0, 2.0}, b0{0.25, -0.75};
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(w.values()[i], w0[i] - lr * (dir + cfg.weight_decay * w0[i]), 1e-15);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(b.values()[i], b0[i] - lr * dir, 1e-15);
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, ZeroGradientWithoutDecayLeavesParameters) {
  ParameterSet ps;
  Tensor w = ps.add("w.weight", Tensor::from({2}, {1.0, 2.0}, true));
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  AdamState st;
  adam_step(ps, st, cfg, 0.1);
  EXPECT_EQ(w.values()[0], 1.0);
  EXPECT_EQ(w.values()[1], 2.0);
}

TEST(Adam, DecayExclusions) {
  EXPECT_TRUE(decays("dec.layer0.attn.q.weight"));
  EXPECT_FALSE(decays("dec.layer0.attn.q.bias"));
  EXPECT_FALSE(decays("dec.final_ln.gain"));
  EXPECT_FALSE(decays("rho"));
}

TEST(Adam, NonFiniteGradientRejectedBeforeAnyUpdate) {
  ParameterSet ps;
  Tensor a = ps.add("a.weight", Tensor::from({2}, {1.0, 1.0}, true));
  Tensor b = ps.add("b.weight", Tensor::from({1}, {3.0}, true));
  a.mutable_grad()[0] = 1.0;
  b.mutable_grad()[0] = std::numeric_limits<double>::quiet_NaN();
  AdamState st;
  EXPECT_THROW(adam_step(ps, st, TrainConfig{}, 0.1), NumericalError);
  EXPECT_EQ(a.values()[0], 1.0);
  EXPECT_EQ(st.step, 0u);
}

TEST(Schedule, LinearWarmupThenConstant) {
  TrainConfig cfg;
  cfg.lr = 1.0;
  cfg.warmup_epochs = 2;
  EXPECT_DOUBLE_EQ(learning_rate(cfg, 1, 3), 1.0 / 6.0);
  EXPECT_DOUBLE_EQ(learning_rate(cfg, 3, 3), 0.5);
  EXPECT_DOUBLE_EQ(learning_rate(cfg, 6, 3), 1.0);
  EXPECT_DOUBLE_EQ(learning_rate(cfg, 60, 3), 1.0);
  cfg.warmup_epochs = 0;
  EXPECT_DOUBLE_EQ(learning_rate(cfg, 1, 3), 1.0);
}

TEST(Clip, RescalesToMaxNorm) {
  ParameterSet ps;
  Tensor a = ps.add("a", Tensor::from({2}, {0.0, 0.0}, true));
  a.mutable_grad()[0] = 3.0;
  a.mutable_grad()[1] = 4.0;
  EXPECT_DOUBLE_EQ(clip_grad_norm(ps, 1.0), 5.0);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-15);
  EXPECT_NEAR(a.grad()[1], 0.8, 1e-15);
  EXPECT_NEAR(clip_grad_norm(ps, 10.0), 1.0, 1e-15);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-15);
}

TEST(TrainConfig, Validation) {
  auto c = TrainConfig::desk();
  c.dropout = 0.1;
  EXPECT_THROW(c.validate(), ValidationError);
  c = TrainConfig::desk();
  c.epochs = 3;
  EXPECT_THROW(c.validate(), ValidationError);  // warmup longer than the run
  c.epochs = 0;
  EXPECT_NO_THROW(c.validate());
}

// ---------------------------------------------------------------------------
// Training loop

TEST(Train, ZeroEpochsLeavesModelUntouched) {
  World s;
  auto before = param_values(s.model);
  auto res = train(s.model, s.ds.train, &s.ds.table, quick(0), LossConfig{});
  EXPECT_TRUE(res.log.empty());
  EXPECT_EQ(res.steps, 0u);
  EXPECT_EQ(param_values(s.model), before);
}

TEST(Train, BitwiseDeterministic) {
  World a, b;
  auto ra = train(a.model, a.ds.train, &a.ds.table, quick(3), LossConfig{});
  auto rb = train(b.model, b.ds.train, &b.ds.table, quick(3), LossConfig{});
  EXPECT_EQ(param_values(a.model), param_values(b.model));
  ASSERT_EQ(ra.log.size(), rb.log.size());
  for (std::size_t i = 0; i < ra.log.size(); ++i) EXPECT_EQ(ra.log[i].loss, rb.log[i].loss);
}

TEST(Train, LossMostlyDecreasesEarly) {
  World s;
  auto res = train(s.model, s.ds.train, &s.ds.table, quick(10), LossConfig{});
  ASSERT_EQ(res.log.size(), 10u);
  int upticks = 0;
  for (std::size_t i = 1; i < res.log.size(); ++i) upticks += res.log[i].loss > res.log[i - 1].loss;
  EXPECT_LE(upticks, 3);
  EXPECT_LT(res.log.back().loss, res.log.front().loss);
}

TEST(Train, EveryParameterMovesInOneEpoch) {
  World s;
  auto before = param_values(s.model);
  auto cfg = quick(1);
  cfg.warmup_epochs = 0;
  cfg.weight_decay = 0.0;  // movement must come from gradients
  train(s.model, s.ds.train, &s.ds.table, cfg, LossConfig{});
  auto after = param_values(s.model);
  const auto& entries = s.model.params().entries();
  for (std::size_t i = 0; i < entries.size(); ++i) EXPECT_NE(after[i], before[i]) << entries[i].first;
}

TEST(Train, MleAblationLogsNoContrastiveTerm) {
  World s;
  LossConfig mle;
  mle.contrastive = false;
  auto res = train(s.model, s.ds.train, &s.ds.table, quick(1), mle);
  EXPECT_EQ(res.log[0].contrastive, 0.0);
  EXPECT_NEAR(res.log[0].loss, res.log[0].caption, 1e-12);
  EXPECT_EQ(s.model.rho().values()[0], LossConfig{}.rho_init);
}

TEST(Train, EmptyAndIncompatibleDataRejected) {
  World s;
  EXPECT_THROW(train(s.model, {}, &s.ds.table, quick(1), LossConfig{}), ValidationError);
  auto videos = s.ds.train;
  videos[0].events[0].snippets[0].env_feature.push_back(0.0);
  EXPECT_THROW(train(s.model, videos, &s.ds.table, quick(1), LossConfig{}), ValidationError);
}

TEST(Train, ObjectiveGradientMatchesFiniteDifferences) {
  World s(2);
  auto rep = objective_gradcheck(s.model, s.ds.train, &s.ds.table, LossConfig{});
  EXPECT_LE(rep.worst, 1e-4) << rep.worst_param;
  EXPECT_EQ(rep.scalars, s.model.params().scalar_count());
}

TEST(MemoryReplay, ReplayReproducesRecordedForward) {
  World s(1);
  MemoryReplay rec;
  auto a = s.model.forward_video(s.ds.train[0], &s.ds.table, &rec);
  ASSERT_EQ(rec.before_event.size(), s.ds.train[0].events.size());
  rec.recording = false;
  auto b = s.model.forward_video(s.ds.train[0], &s.ds.table, &rec);
  for (std::size_t e = 0; e < a.events.size(); ++e)
    EXPECT_EQ(oracle::values(a.events[e].logits), oracle::values(b.events[e].logits));
  rec.before_event.pop_back();
  EXPECT_THROW(s.model.forward_video(s.ds.train[0], &s.ds.table, &rec), ValidationError);
}

// ---------------------------------------------------------------------------
// Evaluation and checkpoints

TEST(Evaluate, DeterministicAndScored) {
  World s;
  train(s.model, s.ds.train, &s.ds.table, quick(2), LossConfig{});
  auto a = evaluate(s.model, s.ds.train, &s.ds.table, 7);
  auto b = evaluate(s.model, s.ds.train, &s.ds.table, 7);
  ASSERT_EQ(a.decoded.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(a.decoded[i].sentences, b.decoded[i].sentences);
  EXPECT_EQ(a.report.to_json(), b.report.to_json());
  EXPECT_EQ(a.report.n_events, 8u);
}

TEST(Evaluate, EmptyDatasetAndForeignCorpusRejected) {
  World s;
  EXPECT_THROW(evaluate(s.model, {}, &s.ds.table, 7), ValidationError);
  auto videos = s.ds.train;
  for (auto& v : videos)
    for (auto& e : v.events) e.caption = "zebra xylophone";
  EXPECT_THROW(evaluate(s.model, videos, &s.ds.table, 7), ValidationError);
}

TEST(Evaluate, UnseenReferenceWordsAreScored) {
  World s;
  auto videos = s.ds.train;
  videos[0].events[0].caption += " zebra";
  auto ev = evaluate(s.model, videos, &s.ds.table, 7);
  EXPECT_EQ(ev.report.n_events, 8u);
}

TEST(Evaluate, TableTokensMustMatch) {
  World s;
  EXPECT_NO_THROW(check_table_tokens(s.ds.table.tokens, s.ds.table));
  auto other = s.ds.table;
  std::swap(other.tokens[0], other.tokens[1]);
  EXPECT_THROW(check_table_tokens(s.ds.table.tokens, other), ValidationError);
  other.tokens.pop_back();
  EXPECT_THROW(check_table_tokens(s.ds.table.tokens, other), ValidationError);
}

TEST(Checkpoint, RoundTripPreservesPredictions) {
  World s;
  train(s.model, s.ds.train, &s.ds.table, quick(1), LossConfig{});
  auto path = (std::filesystem::temp_directory_path() / "vltint_test_ckpt.json").string();
  save_checkpoint(path, s.model, Json{{"note", "x"}});
  auto back = load_checkpoint(path);
  std::filesystem::remove(path);
  EXPECT_EQ(param_values(back), param_values(s.model));
  EXPECT_EQ(back.vocab(), s.model.vocab());
  EXPECT_EQ(back.decode_video(s.ds.train[0], &s.ds.table, 7), s.model.decode_video(s.ds.train[0], &s.ds.table, 7));
}

TEST(Checkpoint, MalformedRejected) {
  World s;
  Json j = checkpoint_to_json(s.model);
  j["format_version"] = 99;
  EXPECT_THROW(model_from_checkpoint(j), ValidationError);
  j = checkpoint_to_json(s.model);
  j["params"]["rho"]["shape"] = Shape{2};
  EXPECT_THROW(model_from_checkpoint(j), ValidationError);
}
