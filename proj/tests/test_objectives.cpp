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
#include <random>
#include <set>

#include "oracles.hpp"

using namespace vltint;
using oracle::Mat;
using oracle::Vec;

namespace {

Tensor random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c, double sigma = 1.0) {
  return Tensor::from({r, c}, oracle::random_vec(rng, r * c, sigma));
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// Explicit sum over all B^2 pairs.
double contrastive_oracle(const Mat& ev, const Mat& cap, double rho) {
  std::size_t b = ev.size();
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) {
      double logit = std::exp(rho) * oracle::cosine(ev[i], cap[j]);
      double sig = 1.0 / (1.0 + std::exp(-logit));
      total += i == j ? -std::log(sig) : -std::log(1.0 - sig);
    }
  return total / static_cast<double>(b * b);
}

// Smoothed cross-entropy + lambda * tau written out position by position.
double captioning_oracle(const Mat& logits, const std::vector<std::size_t>& targets, const LossConfig& cfg) {
  std::size_t v = logits[0].size();
  double nll = 0.0, tau = 0.0;
  std::size_t valid = 0;
  std::set<std::size_t> history;
  std::set<std::size_t> excluded(cfg.penalty_excludes.begin(), cfg.penalty_excludes.end());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] == special::kPad) continue;
    ++valid;
    Vec p = oracle::softmax(logits[i]);
    for (std::size_t c = 0; c < v; ++c) {
      double q = c == targets[i] ? 1.0 - cfg.label_smoothing
                 : c == special::kPad ? 0.0
                                      : cfg.label_smoothing / static_cast<double>(v - 2);
      nll -= q * std::log(p[c]);
    }
    for (auto c : history) tau -= std::log(std::max(cfg.prob_floor, 1.0 - p[c]));
    if (!excluded.count(targets[i])) history.insert(targets[i]);
  }
  return (nll + cfg.lambda * tau) / static_cast<double>(valid);
}

}  // namespace

// ---------------------------------------------------------------------------
// Caption text encoder

TEST(CaptionTextEncoder, SingleTokenIsMlpOfItsEmbedding) {
  ParameterSet ps;
  Initializer init(1);
  CaptionTextEncoder enc(ps, "txt", 10, 6, init);
  Vec row = oracle::rows(enc.embedding_table())[4];
  Vec got = oracle::values(enc({4}));
  Vec want = oracle::mlp(enc.mlp(), row);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(CaptionTextEncoder, RepeatedTokenEqualsSingle) {
  ParameterSet ps;
  Initializer init(2);
  CaptionTextEncoder enc(ps, "txt", 10, 6, init);
  Vec a = oracle::values(enc({7})), b = oracle::values(enc({7, 7}));
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
}

TEST(CaptionTextEncoder, RandomCaptionMatchesMeanThenMlp) {
  ParameterSet ps;
  Initializer init(3);
  CaptionTextEncoder enc(ps, "txt", 10, 6, init);
  std::vector<std::size_t> caption{4, 9, 2, 4, 5};
  Mat table = oracle::rows(enc.embedding_table());
  Vec mean(6, 0.0);
  for (auto t : caption)
    for (std::size_t c = 0; c < 6; ++c) mean[c] += table[t][c] / 5.0;
  Vec want = oracle::mlp(enc.mlp(), mean), got = oracle::values(enc(caption));
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(CaptionTextEncoder, EmptyCaptionRejected) {
  ParameterSet ps;
  Initializer init(4);
  CaptionTextEncoder enc(ps, "txt", 10, 6, init);
  EXPECT_THROW(enc({}), ValidationError);
}

// ---------------------------------------------------------------------------
// Repetition penalty

TEST(RepetitionPenalty, FirstPositionContributesNothing) {
  Tensor probs = Tensor::from({1, 5}, {0.2, 0.2, 0.2, 0.2, 0.2});
  EXPECT_EQ(repetition_penalty_tau(probs, {4}, {}).item(), 0.0);
}

TEST(RepetitionPenalty, ZeroMassOnHistoryGivesZero) {
  // targets 4, 5, 6; each row puts all mass on its own target.
  std::vector<double> p(3 * 7, 0.0);
  p[0 * 7 + 4] = p[1 * 7 + 5] = p[2 * 7 + 6] = 1.0;
  EXPECT_EQ(repetition_penalty_tau(Tensor::from({3, 7}, p), {4, 5, 6}, {0, 1, 2}).item(), 0.0);
}

TEST(RepetitionPenalty, UniformHandCase) {
  Tensor probs = Tensor::full({3, 4}, 0.25);
  double tau = repetition_penalty_tau(probs, {1, 2, 3}, {}).item();
  double want = -(1.0 / 3.0) * (std::log(0.75) + 2.0 * std::log(0.75));
  EXPECT_NEAR(tau, want, 1e-15);
}

TEST(RepetitionPenalty, HistoryIsADistinctSet) {
  // targets 4,4,4: positions 2 and 3 each penalize token 4 once.
  Tensor probs = Tensor::full({3, 5}, 0.2);
  double tau = repetition_penalty_tau(probs, {4, 4, 4}, {}).item();
  EXPECT_NEAR(tau, -(2.0 / 3.0) * std::log(0.8), 1e-15);
}

TEST(RepetitionPenalty, ExcludedAndPadTokens) {
  Tensor probs = Tensor::full({4, 5}, 0.2);
  // bos is excluded from the history; the trailing pad position is skipped and not counted.
  double tau = repetition_penalty_tau(probs, {special::kBos, 4, 3, special::kPad},
                                      {special::kPad, special::kBos, special::kEos})
                   .item();
  EXPECT_NEAR(tau, -(1.0 / 3.0) * std::log(0.8), 1e-15);
}

TEST(RepetitionPenalty, NonNegativeOnRandomInputs) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> tok(0, 7);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor probs = softmax(random_matrix(rng, 6, 8, 3.0), -1);
    std::vector<std::size_t> t(6);
    for (auto& x : t) x = tok(rng);
    t[0] = 4;
    EXPECT_GE(repetition_penalty_tau(probs, t, {0, 1, 2}).item(), 0.0);
  }
}

TEST(RepetitionPenalty, SaturatedProbabilityIsClamped) {
  std::vector<double> p(2 * 5, 0.0);
  p[0 * 5 + 4] = 1.0;
  p[1 * 5 + 4] = 1.0;
  double tau = repetition_penalty_tau(Tensor::from({2, 5}, p), {4, 4}, {}, 1e-8).item();
  EXPECT_NEAR(tau, -0.5 * std::log(1e-8), 1e-12);
}

// ---------------------------------------------------------------------------
// Captioning loss

TEST(CaptioningLoss, PlainNllWithoutSmoothingOrPenalty) {
  std::mt19937_64 rng(6);
  Tensor logits = random_matrix(rng, 4, 7);
  std::vector<std::size_t> targets{4, 5, 4, special::kEos};
  LossConfig cfg;
  cfg.lambda = 0.0;
  cfg.label_smoothing = 0.0;
  auto rows = oracle::rows(logits);
  double want = 0.0;
  for (std::size_t i = 0; i < 4; ++i) want -= std::log(oracle::softmax(rows[i])[targets[i]]);
  EXPECT_NEAR(captioning_loss(logits, targets, cfg).total.item(), want / 4.0, 1e-12);
}

TEST(CaptioningLoss, ConfidentCorrectLogitsGiveZero) {
  std::vector<std::size_t> targets{4, 5, special::kEos};
  std::vector<double> l(3 * 6, 0.0);
  for (std::size_t i = 0; i < 3; ++i) l[i * 6 + targets[i]] = 1000.0;
  LossConfig cfg;
  cfg.label_smoothing = 0.0;
  auto out = captioning_loss(Tensor::from({3, 6}, l), targets, cfg);
  EXPECT_EQ(out.total.item(), 0.0);
  EXPECT_EQ(out.tau.item(), 0.0);
}

TEST(CaptioningLoss, RandomCaseMatchesFormulaOracle) {
  std::mt19937_64 rng(7);
  LossConfig cfg;
  for (int trial = 0; trial < 20; ++trial) {
    Tensor logits = random_matrix(rng, 5, 8);
    std::vector<std::size_t> targets{5, 6, 5, special::kEos, special::kPad};
    EXPECT_NEAR(captioning_loss(logits, targets, cfg).total.item(), captioning_oracle(oracle::rows(logits), targets, cfg),
                1e-12);
  }
}

TEST(CaptioningLoss, AllPaddingRejected) {
  EXPECT_THROW(captioning_loss(Tensor::zeros({2, 5}), {special::kPad, special::kPad}, LossConfig{}), ValidationError);
}

TEST(CaptioningLoss, DecreasesAsCorrectLogitGrows) {
  std::mt19937_64 rng(8);
  Tensor base = random_matrix(rng, 3, 6);
  std::vector<std::size_t> targets{4, 5, special::kEos};
  // Smoothed targets penalize overconfidence, so monotonicity holds only without smoothing.
  LossConfig cfg;
  cfg.label_smoothing = 0.0;
  double prev = std::numeric_limits<double>::infinity();
  for (double boost = -2.0; boost <= 6.0; boost += 0.5) {
    std::vector<double> l(base.values().begin(), base.values().end());
    l[1 * 6 + 5] += boost;
    double loss = captioning_loss(Tensor::from({3, 6}, l), targets, cfg).total.item();
    EXPECT_LT(loss, prev);
    prev = loss;
  }
}

TEST(CaptioningLoss, GradientCheck) {
  std::mt19937_64 rng(9);
  Tensor logits = random_matrix(rng, 4, 7);
  std::vector<std::size_t> targets{4, 5, 4, special::kEos};
  EXPECT_LE(finite_diff_check([&](const Tensor& l) { return captioning_loss(l, targets, LossConfig{}).total; }, logits),
            1e-6);
}

TEST(LossConfig, InvalidValuesRejected) {
  LossConfig c;
  c.label_smoothing = 1.0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = LossConfig{};
  c.lambda = -0.1;
  EXPECT_THROW(c.validate(), ValidationError);
}

// ---------------------------------------------------------------------------
// Contrastive loss

TEST(ContrastiveLoss, SinglePairIsPositiveTermOnly) {
  Tensor ev = Tensor::from({1, 3}, {1.0, 2.0, -1.0}), cap = Tensor::from({1, 3}, {0.5, 1.0, 1.0});
  double rho = 0.3;
  double cosv = oracle::cosine({1.0, 2.0, -1.0}, {0.5, 1.0, 1.0});
  EXPECT_NEAR(contrastive_loss(ev, cap, Tensor::scalar(rho)).item(), softplus(-std::exp(rho) * cosv), 1e-15);
}

TEST(ContrastiveLoss, TwoByTwoMatchesPairLoop) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor ev = random_matrix(rng, 2, 5), cap = random_matrix(rng, 2, 5);
    double rho = std::log(1.0 / 0.07);
    EXPECT_NEAR(contrastive_loss(ev, cap, Tensor::scalar(rho)).item(),
                contrastive_oracle(oracle::rows(ev), oracle::rows(cap), rho), 1e-9);
  }
}

TEST(ContrastiveLoss, LargerBatchMatchesPairLoop) {
  std::mt19937_64 rng(11);
  Tensor ev = random_matrix(rng, 5, 4), cap = random_matrix(rng, 5, 4);
  EXPECT_NEAR(contrastive_loss(ev, cap, Tensor::scalar(1.2)).item(),
              contrastive_oracle(oracle::rows(ev), oracle::rows(cap), 1.2), 1e-9);
}

TEST(ContrastiveLoss, PositiveTermShrinksAsTemperatureGrowsWhenAligned) {
  Tensor ev = Tensor::from({1, 3}, {1.0, 2.0, 3.0});
  double prev = std::numeric_limits<double>::infinity();
  for (double rho = -1.0; rho <= 4.0; rho += 0.5) {
    double loss = contrastive_loss(ev, ev, Tensor::scalar(rho)).item();
    EXPECT_LT(loss, prev);
    prev = loss;
  }
}

TEST(ContrastiveLoss, GradientCheckIncludingTemperature) {
  std::mt19937_64 rng(12);
  Tensor ev = random_matrix(rng, 3, 4), cap = random_matrix(rng, 3, 4);
  Tensor rho = Tensor::scalar(0.7, true);
  Tensor ev_leaf = Tensor::from(ev.shape(), oracle::values(ev), true);
  Tensor cap_leaf = Tensor::from(cap.shape(), oracle::values(cap), true);
  auto fn = [&] { return contrastive_loss(ev_leaf, cap_leaf, rho); };
  EXPECT_LE(finite_diff_check_leaf(fn, rho), 1e-4);
  EXPECT_LE(finite_diff_check_leaf(fn, ev_leaf), 1e-4);
  EXPECT_LE(finite_diff_check_leaf(fn, cap_leaf), 1e-4);
}

TEST(ContrastiveLoss, InvariantUnderJointRowPermutation) {
  std::mt19937_64 rng(13);
  Tensor ev = random_matrix(rng, 4, 5), cap = random_matrix(rng, 4, 5);
  std::vector<std::size_t> perm{2, 0, 3, 1};
  double a = contrastive_loss(ev, cap, Tensor::scalar(2.0)).item();
  double b = contrastive_loss(index_select(ev, perm), index_select(cap, perm), Tensor::scalar(2.0)).item();
  EXPECT_NEAR(a, b, 1e-14);
}

TEST(ContrastiveLoss, ZeroNormEmbeddingRejected) {
  Tensor ev = Tensor::from({2, 2}, {0, 0, 1, 1}), cap = Tensor::from({2, 2}, {1, 0, 0, 1});
  EXPECT_THROW(contrastive_loss(ev, cap, Tensor::scalar(1.0)), ValidationError);
  EXPECT_THROW(contrastive_loss(cap, Tensor::zeros({3, 2}), Tensor::scalar(1.0)), ShapeError);
}

TEST(SimilarityStats, SplitsDiagonalFromOffDiagonal) {
  Tensor ev = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor cap = Tensor::from({2, 2}, {1, 0, 1, 1});
  auto s = similarity_stats(ev, cap);
  EXPECT_NEAR(s.mean_positive, 0.5 * (1.0 + 1.0 / std::sqrt(2.0)), 1e-15);
  EXPECT_NEAR(s.mean_negative, 0.5 * (1.0 / std::sqrt(2.0) + 0.0), 1e-15);
}

// ---------------------------------------------------------------------------
// Combined objective

TEST(VlLoss, ContrastiveDisabledIsCaptionLossOnly) {
  std::mt19937_64 rng(14);
  std::vector<CaptionTarget> events{{random_matrix(rng, 3, 6), {4, 5, special::kEos}},
                                    {random_matrix(rng, 2, 6), {5, special::kEos}}};
  LossConfig cfg;
  cfg.contrastive = false;
  auto out = vl_loss(events, random_matrix(rng, 2, 4), random_matrix(rng, 2, 4), Tensor::scalar(1.0), cfg);
  double want = 0.5 * (captioning_loss(events[0].logits, events[0].targets, cfg).total.item() +
                       captioning_loss(events[1].logits, events[1].targets, cfg).total.item());
  EXPECT_NEAR(out.total.item(), want, 1e-14);
  EXPECT_FALSE(out.contrastive.defined());
}

TEST(VlLoss, SumOfIndependentComponents) {
  std::mt19937_64 rng(15);
  std::vector<CaptionTarget> events{{random_matrix(rng, 3, 6), {4, 5, special::kEos}},
                                    {random_matrix(rng, 2, 6), {5, special::kEos}}};
  Tensor ev = random_matrix(rng, 2, 4), cap = random_matrix(rng, 2, 4);
  LossConfig cfg;
  auto out = vl_loss(events, ev, cap, Tensor::scalar(cfg.rho_init), cfg);
  double cap_part = 0.5 * (captioning_oracle(oracle::rows(events[0].logits), events[0].targets, cfg) +
                           captioning_oracle(oracle::rows(events[1].logits), events[1].targets, cfg));
  double con_part = contrastive_oracle(oracle::rows(ev), oracle::rows(cap), cfg.rho_init);
  EXPECT_NEAR(out.total.item(), cap_part + con_part, 1e-9);
  EXPECT_GT(out.total.item(), 0.0);
  EXPECT_TRUE(std::isfinite(out.total.item()));
}

TEST(VlLoss, NoEventsRejected) {
  EXPECT_THROW(vl_loss({}, Tensor::zeros({1, 2}), Tensor::zeros({1, 2}), Tensor::scalar(1.0), LossConfig{}),
               ValidationError);
}
