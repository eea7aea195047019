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

// Full captioning model: encoder, decoder, caption text encoder and the
// contrastive temperature, plus versioned JSON checkpoints.

#pragma once

#include <cmath>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "vltint/data.hpp"
#include "vltint/decoder.hpp"
#include "vltint/encoder.hpp"
#include "vltint/objectives.hpp"

namespace vltint {

struct ModelConfig {
  std::size_t d_emb = 32;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t ffn_hidden = 64;
  std::size_t d_env = 16;
  std::size_t d_agent = 16;
  std::size_t d_ling = 16;
  std::size_t k = 3;
  std::size_t max_video_len = 4;
  std::size_t max_text_len = 12;
  Modalities modalities;
  std::uint64_t seed = 1;
  double rho_init = std::log(1.0 / 0.07);

  /// Hidden size 768, 3 layers, 12 heads.
  static ModelConfig full_scale() {
    ModelConfig c;
    c.d_emb = 768;
    c.n_layers = 3;
    c.n_heads = 12;
    c.ffn_hidden = 3072;
    return c;
  }

  void validate() const {
    auto check = [](bool ok, const std::string& msg) {
      if (!ok) throw ValidationError("model config: " + msg);
    };
    check(d_emb >= 2, "d_emb must be >= 2");
    check(n_layers >= 1, "n_layers must be >= 1");
    check(n_heads >= 1 && d_emb % n_heads == 0, "n_heads must divide d_emb");
    check(ffn_hidden >= 1 && d_env >= 1 && d_agent >= 1 && d_ling >= 1, "dims must be >= 1");
    check(k >= 1, "k must be >= 1");
    check(max_video_len >= 1 && max_text_len >= 2, "max_video_len >= 1 and max_text_len >= 2 required");
    check(modalities.any(), "at least one modality must be enabled");
    check(std::isfinite(rho_init), "rho_init must be finite");
  }

  EncoderConfig encoder() const {
    return EncoderConfig{d_env, d_agent, d_ling, d_emb, d_emb, k, modalities};
  }
  DecoderConfig decoder(std::size_t vocab) const {
    return DecoderConfig{d_emb, n_layers, n_heads, ffn_hidden, vocab, max_video_len, max_text_len};
  }
};

inline Json modalities_to_json(const Modalities& m) {
  Json j = Json::array();
  if (m.env) j.push_back("env");
  if (m.agent) j.push_back("agent");
  if (m.ling) j.push_back("ling");
  return j;
}

inline Modalities modalities_from_list(const std::vector<std::string>& names) {
  Modalities m{false, false, false};
  for (const auto& n : names) {
    if (n == "env") m.env = true;
    else if (n == "agent") m.agent = true;
    else if (n == "ling") m.ling = true;
    else throw ValidationError("unknown modality '" + n + "' (expected env, agent, ling)");
  }
  if (!m.any()) throw ValidationError("modalities: at least one of env, agent, ling is required");
  return m;
}

inline Json model_config_to_json(const ModelConfig& c) {
  return {{"d_emb", c.d_emb}, {"n_layers", c.n_layers}, {"n_heads", c.n_heads}, {"ffn_hidden", c.ffn_hidden},
          {"d_env", c.d_env}, {"d_agent", c.d_agent}, {"d_ling", c.d_ling}, {"k", c.k},
          {"max_video_len", c.max_video_len}, {"max_text_len", c.max_text_len},
          {"modalities", modalities_to_json(c.modalities)}, {"seed", c.seed}, {"rho_init", c.rho_init}};
}

inline ModelConfig model_config_from_json(const Json& j, const std::string& where = "model") {
  ModelConfig c;
  if (!j.is_object()) throw ValidationError(where + ": expected an object");
  static const std::vector<std::string> known{"d_emb", "n_layers", "n_heads", "ffn_hidden", "d_env", "d_agent",
                                              "d_ling", "k", "max_video_len", "max_text_len", "modalities",
                                              "seed", "rho_init"};
  for (const auto& [k, v] : j.items()) {
    if (std::find(known.begin(), known.end(), k) == known.end()) {
      throw ValidationError(where + ": unknown field '" + k + "'");
    }
    if (k == "modalities") {
      if (!v.is_array()) throw ValidationError(where + ".modalities: expected an array of names");
    } else if (k == "rho_init") {
      if (!v.is_number()) throw ValidationError(where + ".rho_init: expected a number");
    } else if (!v.is_number_unsigned()) {
      throw ValidationError(where + "." + k + ": expected a non-negative integer");
    }
  }
  auto get = [&](const char* k, auto& dst) {
    if (j.contains(k)) dst = j[k].get<std::decay_t<decltype(dst)>>();
  };
  get("d_emb", c.d_emb);
  get("n_layers", c.n_layers);
  get("n_heads", c.n_heads);
  get("ffn_hidden", c.ffn_hidden);
  get("d_env", c.d_env);
  get("d_agent", c.d_agent);
  get("d_ling", c.d_ling);
  get("k", c.k);
  get("max_video_len", c.max_video_len);
  get("max_text_len", c.max_text_len);
  get("seed", c.seed);
  get("rho_init", c.rho_init);
  if (j.contains("modalities")) c.modalities = modalities_from_list(j["modalities"].get<std::vector<std::string>>());
  c.validate();
  return c;
}

/// Teacher-forcing pair for one caption: input = [BOS] + ids, target = ids + [EOS],
/// with ids truncated to max_text_len - 1.
struct CaptionTokens {
  std::vector<std::size_t> input;
  std::vector<std::size_t> target;
  std::vector<std::size_t> words;
};

inline CaptionTokens caption_tokens(const Vocabulary& vocab, const std::string& caption, std::size_t max_text_len) {
  CaptionTokens t;
  t.words = vocab.encode(caption);
  if (t.words.size() > max_text_len - 1) t.words.resize(max_text_len - 1);
  t.input.push_back(special::kBos);
  t.input.insert(t.input.end(), t.words.begin(), t.words.end());
  t.target = t.words;
  t.target.push_back(special::kEos);
  return t;
}

struct MemoryReplay {
  std::vector<EventMemory> before_event;
  bool recording = true;
};

struct VideoForward {
  std::vector<EventOutput> events;
  std::vector<CaptionTokens> captions;
};

class VLTinTModel {
 public:
  VLTinTModel(const ModelConfig& cfg, Vocabulary vocab) : cfg_(cfg), vocab_(std::move(vocab)) {
    cfg_.validate();
    Initializer init(cfg_.seed);
    encoder_ = VLEncoder(params_, "encoder", cfg_.encoder(), init);
    decoder_ = TinTDecoder(params_, "decoder", cfg_.decoder(vocab_.size()), init);
    text_encoder_ = CaptionTextEncoder(params_, "text_encoder", vocab_.size(), cfg_.d_emb, init);
    rho_ = params_.add("rho", Tensor::scalar(cfg_.rho_init, true));
  }
  VLTinTModel(const VLTinTModel&) = delete;
  VLTinTModel& operator=(const VLTinTModel&) = delete;
  VLTinTModel(VLTinTModel&&) = default;

  const ModelConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const VLEncoder& encoder() const { return encoder_; }
  const TinTDecoder& decoder() const { return decoder_; }
  const CaptionTextEncoder& text_encoder() const { return text_encoder_; }
  const Tensor& rho() const { return rho_; }

  CaptionTokens tokens_for(const std::string& caption) const {
    return caption_tokens(vocab_, caption, cfg_.max_text_len);
  }

  /// Teacher-forced pass over all events in timestamp order with one shared
  /// event memory. With `replay` in recording mode the memory seen by each
  /// event is captured; in replay mode those captured memories are used
  /// instead of the live one (finite-difference probes of the detached
  /// objective need the memory held fixed).
  VideoForward forward_video(const VideoRecord& video, const VocabEmbeddingTable* table,
                             MemoryReplay* replay = nullptr) const {
    if (video.events.empty()) throw ValidationError("forward_video: video '" + video.video_id + "' has no events");
    if (replay && !replay->recording && replay->before_event.size() != video.events.size()) {
      throw ValidationError("forward_video: memory replay has " + std::to_string(replay->before_event.size()) +
                            " entries for " + std::to_string(video.events.size()) + " events");
    }
    VideoForward out;
    EventMemory memory = decoder_.new_memory();
    for (std::size_t e = 0; e < video.events.size(); ++e) {
      const auto& ev = video.events[e];
      auto toks = tokens_for(ev.caption);
      Tensor features = encoder_.encode_event(ev.snippets, table);
      if (replay && replay->recording) replay->before_event.push_back(memory);
      if (replay && !replay->recording) memory = replay->before_event[e];
      out.events.push_back(decoder_.forward_event(features, toks.input, memory));
      out.captions.push_back(std::move(toks));
    }
    return out;
  }

  /// Greedy captions (token ids, without the trailing [EOS]) for every event.
  std::vector<std::vector<std::size_t>> decode_video(const VideoRecord& video, const VocabEmbeddingTable* table,
                                                     std::size_t max_len) const {
    NoGradGuard no_grad;
    EventMemory memory = decoder_.new_memory();
    std::vector<std::vector<std::size_t>> out;
    for (const auto& ev : video.events) {
      Tensor features = encoder_.encode_event(ev.snippets, table);
      auto ids = decoder_.greedy_decode(features, memory, std::min(max_len, cfg_.max_text_len));
      if (!ids.empty() && ids.back() == special::kEos) ids.pop_back();
      out.push_back(std::move(ids));
    }
    return out;
  }

  /// Checks that a dataset and table fit this model's input dimensions.
  void check_compatible(const std::vector<VideoRecord>& videos, const VocabEmbeddingTable* table) const {
    if (table && table->feature_dim() != cfg_.d_ling) {
      throw ValidationError("embedding table feature width " + std::to_string(table->feature_dim()) +
                            " does not match model d_ling " + std::to_string(cfg_.d_ling));
    }
    if (table && table->size() < cfg_.k) {
      throw ValidationError("embedding table has fewer tokens than k=" + std::to_string(cfg_.k));
    }
    for (const auto& v : videos) {
      for (const auto& e : v.events) {
        if (e.snippets.size() > cfg_.max_video_len) {
          throw ValidationError("video '" + v.video_id + "': event has " + std::to_string(e.snippets.size()) +
                                " snippets, model max_video_len is " + std::to_string(cfg_.max_video_len));
        }
        for (const auto& s : e.snippets) {
          if (s.env_feature.size() != cfg_.d_env) {
            throw ValidationError("video '" + v.video_id + "': env feature width " +
                                  std::to_string(s.env_feature.size()) + " != d_env " + std::to_string(cfg_.d_env));
          }
          if (s.agent_features.rows > 0 && s.agent_features.cols != cfg_.d_agent) {
            throw ValidationError("video '" + v.video_id + "': agent feature width " +
                                  std::to_string(s.agent_features.cols) + " != d_agent " + std::to_string(cfg_.d_agent));
          }
          if (!s.linguistic && !table) {
            throw ValidationError("video '" + v.video_id + "': frame embeddings need an embedding table");
          }
        }
      }
    }
  }

 private:
  ModelConfig cfg_;
  Vocabulary vocab_;
  ParameterSet params_;
  VLEncoder encoder_;
  TinTDecoder decoder_;
  CaptionTextEncoder text_encoder_;
  Tensor rho_;
};

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr int kCheckpointFormatVersion = 1;

/// {format_version, config: {model, vocab, ...extra}, params: {name: {shape, values}}}
inline Json checkpoint_to_json(const VLTinTModel& model, const Json& extra_config = Json::object()) {
  Json config = extra_config.is_object() ? extra_config : Json::object();
  config["model"] = model_config_to_json(model.config());
  config["vocab"] = model.vocab().words();
  Json params = Json::object();
  for (const auto& [name, t] : model.params().entries()) {
    params[name] = {{"shape", t.shape()}, {"values", std::vector<double>(t.values().begin(), t.values().end())}};
  }
  return {{"format_version", kCheckpointFormatVersion}, {"config", config}, {"params", params}};
}

inline void save_checkpoint(const std::string& path, const VLTinTModel& model, const Json& extra_config = Json::object()) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot write checkpoint '" + path + "'");
  os << checkpoint_to_json(model, extra_config).dump() << '\n';
}

inline VLTinTModel model_from_checkpoint(const Json& j, const std::string& where = "checkpoint") {
  const auto& version = detail::field(j, "format_version", where);
  if (!version.is_number_integer() || version.get<int>() != kCheckpointFormatVersion) {
    throw ValidationError(where + ": unsupported format_version " + version.dump());
  }
  const auto& config = detail::field(j, "config", where);
  ModelConfig cfg = model_config_from_json(detail::field(config, "model", where + ".config"), where + ".config.model");
  const auto& vocab_json = detail::field(config, "vocab", where + ".config");
  if (!vocab_json.is_array()) throw ValidationError(where + ".config.vocab: expected an array of tokens");
  VLTinTModel model(cfg, Vocabulary(vocab_json.get<std::vector<std::string>>()));
  const auto& params = detail::field(j, "params", where);
  if (!params.is_object() || params.size() != model.params().size()) {
    throw ValidationError(where + ".params: expected " + std::to_string(model.params().size()) + " tensors");
  }
  for (auto& [name, t] : model.params().entries()) {
    std::string pw = where + ".params." + name;
    const auto& entry = detail::field(params, name.c_str(), where + ".params");
    auto shape = detail::field(entry, "shape", pw).get<Shape>();
    if (shape != t.shape()) {
      throw ValidationError(pw + ": shape " + shape_str(shape) + " does not match config " + shape_str(t.shape()));
    }
    auto values = detail::numbers(detail::field(entry, "values", pw), pw + ".values");
    if (values.size() != t.numel()) throw ValidationError(pw + ": wrong value count");
    std::copy(values.begin(), values.end(), t.mutable_values().begin());
  }
  return model;
}

inline Json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open '" + path + "'");
  try {
    return Json::parse(is);
  } catch (const Json::parse_error& e) {
    throw ValidationError(path + ": invalid JSON (" + e.what() + ")");
  }
}

inline VLTinTModel load_checkpoint(const std::string& path) { return model_from_checkpoint(read_json_file(path), path); }

}  // namespace vltint
