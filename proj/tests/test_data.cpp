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

#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>

#include "oracles.hpp"

using namespace vltint;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
  return (fs::temp_directory_path() / ("vltint_test_" + std::to_string(::getpid()) + "_" + name)).string();
}

// Character walk: a token is a maximal run of non-space bytes with leading
// and trailing punctuation removed, lowercased.
std::vector<std::string> tokenize_oracle(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    std::size_t b = 0, e = cur.size();
    while (b < e && std::ispunct(static_cast<unsigned char>(cur[b]))) ++b;
    while (e > b && std::ispunct(static_cast<unsigned char>(cur[e - 1]))) --e;
    std::string t;
    for (std::size_t i = b; i < e; ++i) t += static_cast<char>(std::tolower(static_cast<unsigned char>(cur[i])));
    if (!t.empty()) out.push_back(t);
    cur.clear();
  };
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) flush();
    else cur += c;
  }
  flush();
  return out;
}

SyntheticWorldSpec small_world() {
  SyntheticWorldSpec s;
  s.n_videos = 6;
  s.n_heldout = 2;
  s.d_env = 6;
  s.d_a = 5;
  s.d_clip = s.d_l = 8;
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tokenizer and vocabulary

TEST(Tokenize, WorkedExample) {
  EXPECT_EQ(tokenize("A man runs."), (std::vector<std::string>{"a", "man", "runs"}));
}

TEST(Tokenize, EmptyAndPunctuationOnly) {
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_TRUE(tokenize("  ... ! ").empty());
}

TEST(Tokenize, MatchesCharacterWalk) {
  std::vector<std::string> cases{"Hello, World!", "  two   spaces\tand\ttabs\n", "don't stop", "(quoted) \"words\"",
                                 "MiXeD CaSe", "a-b c.d", "...lead trail...", "x"};
  for (const auto& c : cases) EXPECT_EQ(tokenize(c), tokenize_oracle(c)) << c;
}

TEST(Tokenize, DetokenizeInvertsOnNormalizedText) {
  std::string s = "the dog jumps in the park";
  EXPECT_EQ(detokenize(tokenize(s)), s);
}

TEST(Vocabulary, ReservedTokensComeFirst) {
  Vocabulary v({"cat"});
  EXPECT_EQ(v.size(), special::kReservedCount + 1);
  EXPECT_EQ(v.id("cat"), special::kReservedCount);
  EXPECT_EQ(v.id("unseen"), special::kUnk);
  EXPECT_THROW(Vocabulary({"cat", "cat"}), ValidationError);
  EXPECT_THROW(v.token(99), ValidationError);
}

TEST(Vocabulary, BuildMatchesCountingOracle) {
  std::vector<std::string> corpus{"the cat sat", "The cat ran.", "a dog sat", "the end"};
  std::map<std::string, int> counts;
  for (const auto& line : corpus)
    for (const auto& t : tokenize_oracle(line)) ++counts[t];
  Vocabulary v = build_vocab(corpus, 2);
  std::vector<std::string> want;
  for (const auto& [t, c] : counts)
    if (c >= 2) want.push_back(t);
  std::sort(want.begin(), want.end(), [&](const auto& a, const auto& b) {
    return counts[a] != counts[b] ? counts[a] > counts[b] : a < b;
  });
  EXPECT_EQ(v.words(), want);
  EXPECT_EQ(v.words(), (std::vector<std::string>{"the", "cat", "sat"}));
}

TEST(Vocabulary, MinFreqTooHighRejected) {
  EXPECT_THROW(build_vocab({"a b", "c"}, 5), ValidationError);
  EXPECT_THROW(build_vocab({"a b"}, 0), ValidationError);
}

TEST(Vocabulary, IdsStableAcrossCorpusOrder) {
  Vocabulary a = build_vocab({"x y z", "y z", "z"});
  Vocabulary b = build_vocab({"z", "y z", "x y z"});
  EXPECT_EQ(a, b);
}

TEST(Vocabulary, EncodeDecodeRoundTrip) {
  Vocabulary v = build_vocab({"the cat sat on the mat"});
  auto ids = v.encode("The cat sat.");
  EXPECT_EQ(v.decode(ids), "the cat sat");
  ids.push_back(special::kEos);
  ids.push_back(v.id("mat"));
  EXPECT_EQ(v.decode(ids), "the cat sat");
}

// ---------------------------------------------------------------------------
// Manifests

TEST(Manifest, FixtureLoads) {
  auto videos = load_dataset(std::string(VLTINT_FIXTURE_DIR) + "/one_video.jsonl");
  ASSERT_EQ(videos.size(), 1u);
  const auto& v = videos[0];
  EXPECT_EQ(v.video_id, "v_fixture");
  ASSERT_EQ(v.events.size(), 2u);
  EXPECT_EQ(v.events[0].caption, "A man opens the door.");
  EXPECT_EQ(v.events[0].snippets[0].agent_features.rows, 2u);
  EXPECT_EQ(v.events[1].snippets[0].agent_features.rows, 0u);
  EXPECT_TRUE(v.events[1].snippets[0].frame_embedding.has_value());
  EXPECT_FALSE(v.events[1].snippets[0].linguistic.has_value());
  EXPECT_DOUBLE_EQ(v.events[0].end, 4.25);
}

TEST(Manifest, SchemaErrorNamesLocationAndField) {
  std::string path = std::string(VLTINT_FIXTURE_DIR) + "/bad_field.jsonl";
  try {
    load_dataset(path);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("bad_field.jsonl:1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("events[0].snippets[0]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'env'"), std::string::npos) << msg;
  }
}

TEST(Manifest, RoundTripPreservesDoublesExactly) {
  auto ds = generate_synthetic(small_world());
  ds.train[0].events[0].begin = 0.1 + 0.2;  // not representable in 15 digits
  std::string path = temp_path("manifest.jsonl");
  save_dataset(path, ds.train);
  auto back = load_dataset(path);
  fs::remove(path);
  EXPECT_EQ(back, ds.train);
}

TEST(Manifest, EmptyManifestLoadsAsEmpty) {
  std::string path = temp_path("empty.jsonl");
  { std::ofstream os(path); os << "\n\n"; }
  EXPECT_TRUE(load_dataset(path).empty());
  fs::remove(path);
}

TEST(Manifest, MissingFileAndInvalidJson) {
  EXPECT_THROW(load_dataset("/nonexistent/manifest.jsonl"), ValidationError);
  std::string path = temp_path("broken.jsonl");
  { std::ofstream os(path); os << "{not json\n"; }
  EXPECT_THROW(load_dataset(path), ValidationError);
  fs::remove(path);
}

TEST(Manifest, UnorderedEventsRejected) {
  auto ds = generate_synthetic(small_world());
  Json j = video_to_json(ds.train[0]);
  std::swap(j["events"][0], j["events"][1]);
  EXPECT_THROW(video_from_json(j, "v"), ValidationError);
}

TEST(EmbeddingTable, RoundTrip) {
  auto ds = generate_synthetic(small_world());
  std::string path = temp_path("table.json");
  save_table(path, ds.table);
  auto back = load_table(path);
  fs::remove(path);
  EXPECT_EQ(back.tokens, ds.table.tokens);
  EXPECT_EQ(back.text_features.data, ds.table.text_features.data);
  EXPECT_EQ(back.text_projection.data, ds.table.text_projection.data);
  EXPECT_EQ(back.image_projection.data, ds.table.image_projection.data);
}

// ---------------------------------------------------------------------------
// Synthetic world

TEST(Synthetic, DeterministicForSeed) {
  auto a = generate_synthetic(small_world());
  auto b = generate_synthetic(small_world());
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.heldout, b.heldout);
  auto spec = small_world();
  spec.seed = 8;
  EXPECT_NE(generate_synthetic(spec).train, a.train);
}

TEST(Synthetic, NoiselessSingleLatentWorldRepeatsEvents) {
  auto spec = small_world();
  spec.n_agents_latent = spec.n_actions = spec.n_places = 1;
  spec.noise_sigma = 0.0;
  spec.miss_rate = 0.0;
  auto ds = generate_synthetic(spec);
  const auto& first = ds.train[0].events[0];
  for (const auto& v : ds.train)
    for (const auto& e : v.events) {
      EXPECT_EQ(e.caption, first.caption);
      EXPECT_EQ(e.snippets, first.snippets);
    }
}

TEST(Synthetic, CaptionsFollowLatents) {
  auto ds = generate_synthetic(small_world());
  for (std::size_t v = 0; v < ds.train.size(); ++v)
    for (std::size_t e = 0; e < ds.train[v].events.size(); ++e) {
      const auto& lat = ds.train_latents[v][e];
      EXPECT_EQ(ds.train[v].events[e].caption, "the " + agent_words()[lat.agent] + " " + action_words()[lat.action] +
                                                   " in the " + place_words()[lat.place]);
    }
}

TEST(Synthetic, PlaceRecoverableByNearestCentroid) {
  auto spec = small_world();
  spec.n_videos = 40;
  auto ds = generate_synthetic(spec);
  std::vector<std::vector<double>> centroid(spec.n_places, std::vector<double>(spec.d_env, 0.0));
  std::vector<double> count(spec.n_places, 0.0);
  for (std::size_t v = 0; v < ds.train.size(); ++v)
    for (std::size_t e = 0; e < ds.train[v].events.size(); ++e)
      for (const auto& s : ds.train[v].events[e].snippets) {
        auto p = ds.train_latents[v][e].place;
        for (std::size_t c = 0; c < spec.d_env; ++c) centroid[p][c] += s.env_feature[c];
        count[p] += 1.0;
      }
  for (std::size_t p = 0; p < spec.n_places; ++p)
    for (auto& x : centroid[p]) x /= std::max(count[p], 1.0);
  std::size_t hit = 0, total = 0;
  for (std::size_t v = 0; v < ds.train.size(); ++v)
    for (std::size_t e = 0; e < ds.train[v].events.size(); ++e)
      for (const auto& s : ds.train[v].events[e].snippets) {
        std::size_t best = 0;
        double best_d = 1e300;
        for (std::size_t p = 0; p < spec.n_places; ++p) {
          double d = 0.0;
          for (std::size_t c = 0; c < spec.d_env; ++c) d += (s.env_feature[c] - centroid[p][c]) * (s.env_feature[c] - centroid[p][c]);
          if (d < best_d) best_d = d, best = p;
        }
        hit += best == ds.train_latents[v][e].place;
        ++total;
      }
  EXPECT_GT(static_cast<double>(hit) / static_cast<double>(total), 0.9);
}

TEST(Synthetic, RepetitionProneCaptionsRepeatAction) {
  auto spec = small_world();
  spec.repetition_prone = true;
  auto ds = generate_synthetic(spec);
  for (std::size_t v = 0; v < ds.train.size(); ++v) {
    for (std::size_t e = 1; e < ds.train_latents[v].size(); ++e) {
      EXPECT_EQ(ds.train_latents[v][e].agent, ds.train_latents[v][0].agent);
      EXPECT_EQ(ds.train_latents[v][e].place, ds.train_latents[v][0].place);
    }
    auto toks = tokenize(ds.train[v].events[0].caption);
    EXPECT_EQ(std::count(toks.begin(), toks.end(), action_words()[ds.train_latents[v][0].action]), 2);
  }
}

TEST(WorldSpec, JsonRoundTripAndErrors) {
  auto spec = small_world();
  spec.noise_sigma = 0.25;
  spec.repetition_prone = true;
  auto back = world_spec_from_json(world_spec_to_json(spec));
  EXPECT_EQ(world_spec_to_json(back), world_spec_to_json(spec));
  EXPECT_THROW(world_spec_from_json(Json{{"bogus", 1}}), ValidationError);
  EXPECT_THROW(world_spec_from_json(Json{{"n_places", "four"}}), ValidationError);
  EXPECT_THROW(world_spec_from_json(Json{{"n_places", 99}}), ValidationError);
  EXPECT_THROW(world_spec_from_json(Json{{"d_l", 3}}), ValidationError);
  EXPECT_EQ(world_spec_from_json(Json{{"noise_sigma", 1}}).noise_sigma, 1.0);
}
