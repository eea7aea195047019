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

// Paragraph caption metrics: corpus BLEU@4, ROUGE-L, Div@2 and R@4.

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "vltint/data.hpp"

namespace vltint {

using Sentence = std::vector<std::string>;

/// One video's generated and reference sentences, one per event.
struct ParagraphPair {
  std::vector<Sentence> hypothesis;
  std::vector<Sentence> reference;

  void validate() const {
    if (hypothesis.size() != reference.size()) {
      throw ValidationError("paragraph pair: " + std::to_string(hypothesis.size()) + " hypothesis vs " +
                            std::to_string(reference.size()) + " reference sentences");
    }
  }
  Sentence joined_hypothesis() const {
    Sentence out;
    for (const auto& s : hypothesis) out.insert(out.end(), s.begin(), s.end());
    return out;
  }
};

namespace detail {
inline std::map<Sentence, std::size_t> ngram_counts(const Sentence& s, std::size_t n) {
  std::map<Sentence, std::size_t> counts;
  if (s.size() < n) return counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++counts[Sentence(s.begin() + i, s.begin() + i + n)];
  return counts;
}
}  // namespace detail

inline constexpr double kBleuEpsilon = 1e-9;

/// Corpus BLEU over all event sentences: clipped n-gram precisions for
/// n = 1..4, geometric mean, brevity penalty. A zero match count is replaced
/// by kBleuEpsilon.
inline double bleu4(const std::vector<ParagraphPair>& pairs) {
  std::size_t hyp_len = 0, ref_len = 0;
  double matches[4] = {0, 0, 0, 0}, totals[4] = {0, 0, 0, 0};
  for (const auto& p : pairs) {
    p.validate();
    for (std::size_t e = 0; e < p.hypothesis.size(); ++e) {
      const auto& h = p.hypothesis[e];
      const auto& r = p.reference[e];
      hyp_len += h.size();
      ref_len += r.size();
      for (std::size_t n = 1; n <= 4; ++n) {
        auto hc = detail::ngram_counts(h, n);
        auto rc = detail::ngram_counts(r, n);
        for (const auto& [g, c] : hc) {
          auto it = rc.find(g);
          matches[n - 1] += static_cast<double>(std::min(c, it == rc.end() ? std::size_t{0} : it->second));
          totals[n - 1] += static_cast<double>(c);
        }
      }
    }
  }
  if (hyp_len == 0) return 0.0;
  double log_sum = 0.0;
  for (int n = 0; n < 4; ++n) {
    if (totals[n] == 0.0) return 0.0;  // hypothesis too short for this order
    log_sum += std::log(std::max(matches[n], kBleuEpsilon) / totals[n]);
  }
  double bp = hyp_len > ref_len ? 1.0 : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  return bp * std::exp(log_sum / 4.0);
}

inline std::size_t lcs_length(const Sentence& a, const Sentence& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// LCS F-measure with recall weighted by beta.
inline double rouge_l_sentence(const Sentence& hyp, const Sentence& ref, double beta = 1.2) {
  if (hyp.empty() || ref.empty()) return 0.0;
  double lcs = static_cast<double>(lcs_length(hyp, ref));
  if (lcs == 0.0) return 0.0;
  double p = lcs / static_cast<double>(hyp.size());
  double r = lcs / static_cast<double>(ref.size());
  return (1.0 + beta * beta) * p * r / (r + beta * beta * p);
}

/// Mean over videos of the mean per-event ROUGE-L.
inline double rouge_l(const std::vector<ParagraphPair>& pairs) {
  double total = 0.0;
  std::size_t videos = 0;
  for (const auto& p : pairs) {
    p.validate();
    if (p.hypothesis.empty()) continue;
    double s = 0.0;
    for (std::size_t e = 0; e < p.hypothesis.size(); ++e) s += rouge_l_sentence(p.hypothesis[e], p.reference[e]);
    total += s / static_cast<double>(p.hypothesis.size());
    ++videos;
  }
  return videos == 0 ? 0.0 : total / static_cast<double>(videos);
}

struct ParagraphScore {
  double value = 0.0;
  std::size_t scored = 0;
  std::size_t skipped = 0;  // paragraphs too short for the n-gram order
};

namespace detail {
// distinct / total n-grams per paragraph; `repetition` flips to (total - distinct) / total.
inline ParagraphScore ngram_ratio(const std::vector<Sentence>& paragraphs, std::size_t n, bool repetition) {
  ParagraphScore out;
  for (const auto& p : paragraphs) {
    if (p.size() < n) {
      ++out.skipped;
      continue;
    }
    auto counts = ngram_counts(p, n);
    double total = static_cast<double>(p.size() - n + 1);
    double distinct = static_cast<double>(counts.size());
    out.value += repetition ? (total - distinct) / total : distinct / total;
    ++out.scored;
  }
  if (out.scored) out.value /= static_cast<double>(out.scored);
  return out;
}
}  // namespace detail

/// Distinct-bigram ratio of each paragraph, averaged.
inline ParagraphScore div2(const std::vector<Sentence>& paragraphs) { return detail::ngram_ratio(paragraphs, 2, false); }

/// Repeated-4-gram ratio (total - distinct) / total of each paragraph, averaged.
inline ParagraphScore rep4(const std::vector<Sentence>& paragraphs) { return detail::ngram_ratio(paragraphs, 4, true); }

struct MetricReport {
  double bleu4 = 0.0;
  double rouge_l = 0.0;
  double div2 = 0.0;
  double rep4 = 0.0;
  std::size_t n_videos = 0;
  std::size_t n_events = 0;
  std::size_t skipped = 0;

  Json to_json() const {
    return {{"bleu4", bleu4}, {"rouge_l", rouge_l}, {"div2", div2}, {"rep4", rep4},
            {"n_videos", n_videos}, {"n_events", n_events}, {"skipped", skipped}};
  }
};

inline MetricReport score_paragraphs(const std::vector<ParagraphPair>& pairs) {
  MetricReport r;
  r.bleu4 = bleu4(pairs);
  r.rouge_l = rouge_l(pairs);
  std::vector<Sentence> paragraphs;
  for (const auto& p : pairs) {
    paragraphs.push_back(p.joined_hypothesis());
    r.n_events += p.hypothesis.size();
  }
  auto d = div2(paragraphs);
  auto rp = rep4(paragraphs);
  r.div2 = d.value;
  r.rep4 = rp.value;
  r.skipped = d.skipped + rp.skipped;
  r.n_videos = pairs.size();
  return r;
}

}  // namespace vltint
