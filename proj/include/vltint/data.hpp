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

// Datasets: tokenizer, vocabulary, the JSON-lines manifest and embedding
// table formats, and a seeded synthetic world whose captions are recoverable
// from the generated features.

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "vltint/encoder.hpp"
#include "vltint/special_tokens.hpp"

namespace vltint {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Text

/// Lowercase, split on whitespace, strip leading/trailing punctuation.
inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string piece;
  while (is >> piece) {
    std::size_t b = 0, e = piece.size();
    while (b < e && std::ispunct(static_cast<unsigned char>(piece[b]))) ++b;
    while (e > b && std::ispunct(static_cast<unsigned char>(piece[e - 1]))) --e;
    if (b == e) continue;
    std::string tok = piece.substr(b, e - b);
    for (auto& c : tok) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    out.push_back(std::move(tok));
  }
  return out;
}

inline std::string detokenize(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

class Vocabulary {
 public:
  Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

  /// `words` are the non-reserved tokens in id order.
  explicit Vocabulary(const std::vector<std::string>& words) {
    for (auto* name : special::kNames) push(name);
    for (const auto& w : words) {
      if (ids_.count(w)) throw ValidationError("vocabulary: duplicate token '" + w + "'");
      push(w);
    }
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::vector<std::string> words() const { return {tokens_.begin() + special::kReservedCount, tokens_.end()}; }
  bool contains(const std::string& t) const { return ids_.count(t) > 0; }
  std::size_t id(const std::string& t) const {
    auto it = ids_.find(t);
    return it == ids_.end() ? special::kUnk : it->second;
  }
  const std::string& token(std::size_t id) const {
    if (id >= tokens_.size()) throw ValidationError("vocabulary: id " + std::to_string(id) + " out of range");
    return tokens_[id];
  }

  std::vector<std::size_t> encode(const std::string& text) const {
    std::vector<std::size_t> ids;
    for (const auto& t : tokenize(text)) ids.push_back(id(t));
    return ids;
  }
  /// Joins tokens up to the first [EOS], skipping reserved ids.
  std::string decode(const std::vector<std::size_t>& ids) const {
    std::vector<std::string> words;
    for (auto i : ids) {
      if (i == special::kEos) break;
      if (i < special::kReservedCount) continue;
      words.push_back(token(i));
    }
    return detokenize(words);
  }

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  void push(const std::string& t) {
    ids_[t] = tokens_.size();
    tokens_.push_back(t);
  }
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> ids_;
};

/// Tokens with count >= min_freq, ordered by (count desc, token asc).
inline Vocabulary build_vocab(const std::vector<std::string>& corpus, std::size_t min_freq = 1) {
  if (min_freq < 1) throw ValidationError("build_vocab: min_freq must be >= 1");
  std::map<std::string, std::size_t> counts;
  for (const auto& line : corpus)
    for (const auto& t : tokenize(line)) ++counts[t];
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [t, c] : counts) {
    if (c >= min_freq) kept.emplace_back(t, c);
  }
  if (kept.empty()) throw ValidationError("build_vocab: no token reaches min_freq " + std::to_string(min_freq));
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> words;
  for (auto& [t, _] : kept) words.push_back(t);
  return Vocabulary(words);
}

// ---------------------------------------------------------------------------
// Records

struct Event {
  double begin = 0.0;
  double end = 0.0;
  std::string caption;
  std::vector<SnippetInput> snippets;

  bool operator==(const Event&) const = default;
};

struct VideoRecord {
  std::string video_id;
  std::vector<Event> events;

  bool operator==(const VideoRecord&) const = default;

  void validate() const {
    if (events.empty()) throw ValidationError("video '" + video_id + "' has no events");
    for (std::size_t i = 0; i < events.size(); ++i) {
      if (events[i].snippets.empty()) {
        throw ValidationError("video '" + video_id + "' event " + std::to_string(i) + " has no snippets");
      }
      if (i > 0 && events[i].begin < events[i - 1].begin) {
        throw ValidationError("video '" + video_id + "' events are not ordered by begin timestamp");
      }
    }
  }
};

inline std::vector<std::string> captions_of(const std::vector<VideoRecord>& videos) {
  std::vector<std::string> out;
  for (const auto& v : videos)
    for (const auto& e : v.events) out.push_back(e.caption);
  return out;
}

// ---------------------------------------------------------------------------
// JSON schema

namespace detail {

inline const Json& field(const Json& obj, const char* name, const std::string& where) {
  if (!obj.is_object()) throw ValidationError(where + ": expected an object");
  auto it = obj.find(name);
  if (it == obj.end()) throw ValidationError(where + ": missing field '" + name + "'");
  return *it;
}

inline std::vector<double> numbers(const Json& j, const std::string& where) {
  if (!j.is_array()) throw ValidationError(where + ": expected an array of numbers");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& x : j) {
    if (!x.is_number()) throw ValidationError(where + ": expected a number");
    out.push_back(x.get<double>());
  }
  return out;
}

inline FeatureMatrix matrix(const Json& j, const std::string& where) {
  if (!j.is_array()) throw ValidationError(where + ": expected an array of rows");
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < j.size(); ++i) rows.push_back(numbers(j[i], where + "[" + std::to_string(i) + "]"));
  try {
    return FeatureMatrix::from_rows(rows);
  } catch (const ShapeError&) {
    throw ValidationError(where + ": rows have unequal lengths");
  }
}

inline Json matrix_json(const FeatureMatrix& m) {
  Json rows = Json::array();
  for (std::size_t i = 0; i < m.rows; ++i) rows.push_back(std::vector<double>(m.row(i).begin(), m.row(i).end()));
  return rows;
}

}  // namespace detail

inline Json snippet_to_json(const SnippetInput& s) {
  Json j;
  j["env"] = s.env_feature;
  j["agents"] = detail::matrix_json(s.agent_features);
  if (s.linguistic) j["linguistic"] = detail::matrix_json(*s.linguistic);
  if (s.frame_embedding) j["frame"] = *s.frame_embedding;
  return j;
}

inline SnippetInput snippet_from_json(const Json& j, const std::string& where) {
  SnippetInput s;
  s.env_feature = detail::numbers(detail::field(j, "env", where), where + ".env");
  s.agent_features = detail::matrix(detail::field(j, "agents", where), where + ".agents");
  if (j.contains("linguistic")) s.linguistic = detail::matrix(j["linguistic"], where + ".linguistic");
  if (j.contains("frame")) s.frame_embedding = detail::numbers(j["frame"], where + ".frame");
  if (!s.linguistic && !s.frame_embedding) {
    throw ValidationError(where + ": missing field 'linguistic' or 'frame'");
  }
  return s;
}

inline Json video_to_json(const VideoRecord& v) {
  Json events = Json::array();
  for (const auto& e : v.events) {
    Json snippets = Json::array();
    for (const auto& s : e.snippets) snippets.push_back(snippet_to_json(s));
    events.push_back({{"begin", e.begin}, {"end", e.end}, {"caption", e.caption}, {"snippets", snippets}});
  }
  return {{"video_id", v.video_id}, {"events", events}};
}

inline VideoRecord video_from_json(const Json& j, const std::string& where) {
  VideoRecord v;
  const auto& id = detail::field(j, "video_id", where);
  if (!id.is_string()) throw ValidationError(where + ".video_id: expected a string");
  v.video_id = id.get<std::string>();
  const auto& events = detail::field(j, "events", where);
  if (!events.is_array()) throw ValidationError(where + ".events: expected an array");
  for (std::size_t i = 0; i < events.size(); ++i) {
    std::string ew = where + ".events[" + std::to_string(i) + "]";
    Event e;
    const auto& b = detail::field(events[i], "begin", ew);
    const auto& en = detail::field(events[i], "end", ew);
    const auto& cap = detail::field(events[i], "caption", ew);
    if (!b.is_number() || !en.is_number()) throw ValidationError(ew + ": timestamps must be numbers");
    if (!cap.is_string()) throw ValidationError(ew + ".caption: expected a string");
    e.begin = b.get<double>();
    e.end = en.get<double>();
    e.caption = cap.get<std::string>();
    const auto& snippets = detail::field(events[i], "snippets", ew);
    if (!snippets.is_array()) throw ValidationError(ew + ".snippets: expected an array");
    for (std::size_t s = 0; s < snippets.size(); ++s) {
      e.snippets.push_back(snippet_from_json(snippets[s], ew + ".snippets[" + std::to_string(s) + "]"));
    }
    v.events.push_back(std::move(e));
  }
  try {
    v.validate();
  } catch (const ValidationError& err) {
    throw ValidationError(where + ": " + err.what());
  }
  return v;
}

/// Writes one VideoRecord per line.
inline void save_dataset(const std::string& path, const std::vector<VideoRecord>& videos) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot write manifest '" + path + "'");
  for (const auto& v : videos) os << video_to_json(v).dump() << '\n';
}

inline std::vector<VideoRecord> load_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open manifest '" + path + "'");
  std::vector<VideoRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    std::string where = path + ":" + std::to_string(lineno);
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw ValidationError(where + ": invalid JSON (" + e.what() + ")");
    }
    out.push_back(video_from_json(j, where));
  }
  return out;
}

inline Json table_to_json(const VocabEmbeddingTable& t) {
  return {{"tokens", t.tokens},
          {"text_features", detail::matrix_json(t.text_features)},
          {"W_t", detail::matrix_json(t.text_projection)},
          {"W_i", detail::matrix_json(t.image_projection)}};
}

inline VocabEmbeddingTable table_from_json(const Json& j, const std::string& where) {
  VocabEmbeddingTable t;
  const auto& tokens = detail::field(j, "tokens", where);
  if (!tokens.is_array()) throw ValidationError(where + ".tokens: expected an array");
  for (const auto& tok : tokens) {
    if (!tok.is_string()) throw ValidationError(where + ".tokens: expected strings");
    t.tokens.push_back(tok.get<std::string>());
  }
  t.text_features = detail::matrix(detail::field(j, "text_features", where), where + ".text_features");
  t.text_projection = detail::matrix(detail::field(j, "W_t", where), where + ".W_t");
  t.image_projection = detail::matrix(detail::field(j, "W_i", where), where + ".W_i");
  try {
    t.validate();
  } catch (const ValidationError& err) {
    throw ValidationError(where + ": " + err.what());
  }
  return t;
}

inline void save_table(const std::string& path, const VocabEmbeddingTable& t) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot write embedding table '" + path + "'");
  os << table_to_json(t).dump() << '\n';
}

inline VocabEmbeddingTable load_table(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open embedding table '" + path + "'");
  Json j;
  try {
    j = Json::parse(is);
  } catch (const Json::parse_error& e) {
    throw ValidationError(path + ": invalid JSON (" + e.what() + ")");
  }
  return table_from_json(j, path);
}

// ---------------------------------------------------------------------------
// Synthetic world

struct SyntheticWorldSpec {
  std::size_t n_agents_latent = 4;
  std::size_t n_actions = 4;
  std::size_t n_places = 4;
  std::size_t d_env = 16;
  std::size_t d_a = 16;
  std::size_t d_clip = 16;
  std::size_t d_l = 16;
  double noise_sigma = 0.1;
  std::uint64_t seed = 7;
  std::size_t n_videos = 16;
  std::size_t n_heldout = 0;
  std::size_t events_per_video = 3;
  std::size_t snippets_per_event = 3;
  std::size_t max_agents = 3;     // detections per snippet, main agent included
  double miss_rate = 0.1;         // probability a snippet has no detections
  std::size_t n_distractor_tokens = 4;
  bool repetition_prone = false;

  void validate() const;
};

inline const std::vector<std::string>& agent_words() {
  static const std::vector<std::string> w{"man", "woman", "boy", "girl", "dog", "chef", "player", "dancer"};
  return w;
}
inline const std::vector<std::string>& action_words() {
  static const std::vector<std::string> w{"runs", "jumps", "dances", "cooks", "swims", "climbs", "sings", "throws"};
  return w;
}
inline const std::vector<std::string>& place_words() {
  static const std::vector<std::string> w{"park", "kitchen", "street", "beach", "gym", "field", "pool", "stage"};
  return w;
}
inline const std::vector<std::string>& distractor_words() {
  static const std::vector<std::string> w{"light", "tree", "car", "wall", "crowd", "water", "grass", "table"};
  return w;
}

inline void SyntheticWorldSpec::validate() const {
  auto check = [](bool ok, const std::string& msg) {
    if (!ok) throw ValidationError("synthetic world: " + msg);
  };
  check(n_agents_latent >= 1 && n_agents_latent <= agent_words().size(), "n_agents_latent must be in [1, 8]");
  check(n_actions >= 1 && n_actions <= action_words().size(), "n_actions must be in [1, 8]");
  check(n_places >= 1 && n_places <= place_words().size(), "n_places must be in [1, 8]");
  check(n_distractor_tokens <= distractor_words().size(), "n_distractor_tokens must be <= 8");
  check(d_env >= 1 && d_a >= 1 && d_clip >= 1, "feature dims must be >= 1");
  check(d_l == d_clip, "d_l must equal d_clip (scene elements are raw text features)");
  check(noise_sigma >= 0.0, "noise_sigma must be >= 0");
  check(events_per_video >= 1 && snippets_per_event >= 1, "events and snippets per video must be >= 1");
  check(max_agents >= 1, "max_agents must be >= 1");
  check(miss_rate >= 0.0 && miss_rate <= 1.0, "miss_rate must be in [0, 1]");
}

struct EventLatent {
  std::size_t agent = 0, action = 0, place = 0;
};

struct SyntheticDataset {
  std::vector<VideoRecord> train;
  std::vector<VideoRecord> heldout;
  VocabEmbeddingTable table;
  std::vector<std::vector<EventLatent>> train_latents;
  std::vector<std::vector<EventLatent>> heldout_latents;
};

namespace detail {
inline std::vector<double> gaussian(std::mt19937_64& rng, std::size_t n, double sigma) {
  std::vector<double> v(n, 0.0);
  if (sigma == 0.0) return v;
  std::normal_distribution<double> dist(0.0, sigma);
  for (auto& x : v) x = dist(rng);
  return v;
}

// Random orthogonal matrix by Gram-Schmidt on Gaussian rows.
inline FeatureMatrix random_orthogonal(std::mt19937_64& rng, std::size_t d) {
  FeatureMatrix m(d, d, gaussian(rng, d * d, 1.0));
  for (std::size_t i = 0; i < d; ++i) {
    double* ri = m.data.data() + i * d;
    for (std::size_t j = 0; j < i; ++j) {
      const double* rj = m.data.data() + j * d;
      double p = 0.0;
      for (std::size_t c = 0; c < d; ++c) p += ri[c] * rj[c];
      for (std::size_t c = 0; c < d; ++c) ri[c] -= p * rj[c];
    }
    double n = 0.0;
    for (std::size_t c = 0; c < d; ++c) n += ri[c] * ri[c];
    n = std::sqrt(n);
    for (std::size_t c = 0; c < d; ++c) ri[c] /= n;
  }
  return m;
}
}  // namespace detail

/// Samples an (agent, action, place) script per event and renders features
/// from fixed per-seed embedding tables:
///   env   = place embedding + noise
///   agents = main agent (+ weaker distractor agents) + noise, shuffled
///   frame = (f^w[agent] + f^w[action] + f^w[place]) / sqrt(3) + noise
///   caption = "the <agent> <action> in the <place>"
/// The repetition-prone variant keeps agent and place fixed per video,
/// usually repeats the previous event's action, and uses a caption that
/// mentions the action twice.
inline SyntheticDataset generate_synthetic(const SyntheticWorldSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const double sigma = spec.noise_sigma;

  FeatureMatrix agent_emb(spec.n_agents_latent, spec.d_a, detail::gaussian(rng, spec.n_agents_latent * spec.d_a, 1.0));
  FeatureMatrix place_emb(spec.n_places, spec.d_env, detail::gaussian(rng, spec.n_places * spec.d_env, 1.0));

  SyntheticDataset ds;
  auto& table = ds.table;
  for (std::size_t i = 0; i < spec.n_agents_latent; ++i) table.tokens.push_back(agent_words()[i]);
  for (std::size_t i = 0; i < spec.n_actions; ++i) table.tokens.push_back(action_words()[i]);
  for (std::size_t i = 0; i < spec.n_places; ++i) table.tokens.push_back(place_words()[i]);
  for (std::size_t i = 0; i < spec.n_distractor_tokens; ++i) table.tokens.push_back(distractor_words()[i]);
  const std::size_t m = table.tokens.size();
  table.text_features = FeatureMatrix(m, spec.d_clip, detail::gaussian(rng, m * spec.d_clip, 1.0));
  table.text_projection = detail::random_orthogonal(rng, spec.d_clip);
  table.image_projection = table.text_projection;

  const std::size_t action_base = spec.n_agents_latent;
  const std::size_t place_base = action_base + spec.n_actions;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };

  auto make_video = [&](std::size_t vi, std::vector<EventLatent>& latents) {
    VideoRecord video;
    video.video_id = "synth_" + std::to_string(spec.seed) + "_" + std::to_string(vi);
    EventLatent prev{};
    for (std::size_t e = 0; e < spec.events_per_video; ++e) {
      EventLatent lat{pick(spec.n_agents_latent), pick(spec.n_actions), pick(spec.n_places)};
      if (spec.repetition_prone && e > 0) {
        lat.agent = prev.agent;
        lat.place = prev.place;
        if (unit(rng) < 0.7) lat.action = prev.action;
      }
      prev = lat;
      latents.push_back(lat);

      Event ev;
      ev.begin = 10.0 * static_cast<double>(e) + 2.0 * unit(rng);
      ev.end = ev.begin + 5.0;
      const auto& agent = agent_words()[lat.agent];
      const auto& action = action_words()[lat.action];
      const auto& place = place_words()[lat.place];
      ev.caption = spec.repetition_prone ? "the " + agent + " " + action + " in the " + place + " and " + action + " again"
                                         : "the " + agent + " " + action + " in the " + place;
      for (std::size_t s = 0; s < spec.snippets_per_event; ++s) {
        SnippetInput snip;
        snip.env_feature = detail::gaussian(rng, spec.d_env, sigma);
        for (std::size_t c = 0; c < spec.d_env; ++c) snip.env_feature[c] += place_emb.data[lat.place * spec.d_env + c];

        std::vector<std::vector<double>> rows;
        if (!(unit(rng) < spec.miss_rate)) {
          std::size_t distractors = spec.n_agents_latent > 1 ? pick(spec.max_agents) : 0;
          std::vector<double> main = detail::gaussian(rng, spec.d_a, sigma);
          for (std::size_t c = 0; c < spec.d_a; ++c) main[c] += agent_emb.data[lat.agent * spec.d_a + c];
          rows.push_back(std::move(main));
          for (std::size_t k = 0; k < distractors; ++k) {
            std::size_t other = (lat.agent + 1 + pick(spec.n_agents_latent - 1)) % spec.n_agents_latent;
            std::vector<double> r = detail::gaussian(rng, spec.d_a, sigma);
            for (std::size_t c = 0; c < spec.d_a; ++c) r[c] += 0.5 * agent_emb.data[other * spec.d_a + c];
            rows.push_back(std::move(r));
          }
          std::shuffle(rows.begin(), rows.end(), rng);
        }
        snip.agent_features = FeatureMatrix::from_rows(rows, spec.d_a);

        std::vector<double> frame = detail::gaussian(rng, spec.d_clip, sigma);
        const double w = 1.0 / std::sqrt(3.0);
        for (std::size_t c = 0; c < spec.d_clip; ++c) {
          frame[c] += w * (table.text_features.data[lat.agent * spec.d_clip + c] +
                           table.text_features.data[(action_base + lat.action) * spec.d_clip + c] +
                           table.text_features.data[(place_base + lat.place) * spec.d_clip + c]);
        }
        snip.frame_embedding = std::move(frame);
        ev.snippets.push_back(std::move(snip));
      }
      video.events.push_back(std::move(ev));
    }
    return video;
  };

  for (std::size_t v = 0; v < spec.n_videos; ++v) {
    ds.train_latents.emplace_back();
    ds.train.push_back(make_video(v, ds.train_latents.back()));
  }
  for (std::size_t v = 0; v < spec.n_heldout; ++v) {
    ds.heldout_latents.emplace_back();
    ds.heldout.push_back(make_video(spec.n_videos + v, ds.heldout_latents.back()));
  }
  return ds;
}

inline Json world_spec_to_json(const SyntheticWorldSpec& s) {
  return {{"n_agents_latent", s.n_agents_latent}, {"n_actions", s.n_actions}, {"n_places", s.n_places},
          {"d_env", s.d_env}, {"d_a", s.d_a}, {"d_clip", s.d_clip}, {"d_l", s.d_l},
          {"noise_sigma", s.noise_sigma}, {"seed", s.seed}, {"n_videos", s.n_videos}, {"n_heldout", s.n_heldout},
          {"events_per_video", s.events_per_video}, {"snippets_per_event", s.snippets_per_event},
          {"max_agents", s.max_agents}, {"miss_rate", s.miss_rate}, {"n_distractor_tokens", s.n_distractor_tokens},
          {"repetition_prone", s.repetition_prone}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline SyntheticWorldSpec world_spec_from_json(const Json& j, const std::string& where = "world") {
  SyntheticWorldSpec s;
  Json defaults = world_spec_to_json(s);
  if (!j.is_object()) throw ValidationError(where + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    if (!defaults.contains(k)) throw ValidationError(where + ": unknown field '" + k + "'");
    if (v.type() != defaults[k].type() &&
        !(v.is_number() && defaults[k].is_number() && (defaults[k].is_number_float() || v.is_number_integer())))
      throw ValidationError(where + "." + k + ": wrong type");
    if (v.is_number_integer() && v.get<long long>() < 0) throw ValidationError(where + "." + k + ": must be non-negative");
  }
  auto get = [&](const char* k, auto& dst) {
    if (j.contains(k)) dst = j[k].get<std::decay_t<decltype(dst)>>();
  };
  get("n_agents_latent", s.n_agents_latent);
  get("n_actions", s.n_actions);
  get("n_places", s.n_places);
  get("d_env", s.d_env);
  get("d_a", s.d_a);
  get("d_clip", s.d_clip);
  get("d_l", s.d_l);
  get("noise_sigma", s.noise_sigma);
  get("seed", s.seed);
  get("n_videos", s.n_videos);
  get("n_heldout", s.n_heldout);
  get("events_per_video", s.events_per_video);
  get("snippets_per_event", s.snippets_per_event);
  get("max_agents", s.max_agents);
  get("miss_rate", s.miss_rate);
  get("n_distractor_tokens", s.n_distractor_tokens);
  get("repetition_prone", s.repetition_prone);
  s.validate();
  return s;
}

}  // namespace vltint
