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

// vltint: synthetic data, training, evaluation, decoding and gradient checks.
//
// Exit codes: 0 ok, 1 usage, 2 validation, 3 numerical failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "vltint/vltint.hpp"

namespace fs = std::filesystem;
using namespace vltint;

namespace {

constexpr int kSchemaVersion = 1;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> modalities;
  std::string loss;
  std::optional<std::size_t> max_len;
  std::optional<std::size_t> k;
  std::optional<std::size_t> epochs;
  std::string manifest;
  std::string table;
  std::string checkpoint;
};

// ---------------------------------------------------------------------------
// Run configuration: file values first, then flags.

struct RunConfig {
  std::uint64_t seed = 1;
  Json world = Json::object();
  Json model = Json::object();
  TrainConfig train = TrainConfig::desk();
  LossConfig loss;
  std::size_t max_len = 12;

  Json to_json() const {
    Json t{{"lr", train.lr},           {"beta1", train.beta1},     {"beta2", train.beta2},
           {"adam_eps", train.adam_eps}, {"weight_decay", train.weight_decay},
           {"warmup_epochs", train.warmup_epochs}, {"epochs", train.epochs},
           {"batch_size", train.batch_size}, {"grad_clip", train.grad_clip}};
    Json l{{"type", loss.contrastive ? "vl" : "mle"}, {"lambda", loss.lambda}, {"label_smoothing", loss.label_smoothing}};
    return {{"schema_version", kSchemaVersion}, {"seed", seed}, {"world", world}, {"model", model},
            {"train", t}, {"loss", l}, {"max_len", max_len}};
  }
};

void require_object(const Json& j, const std::string& where, const std::vector<std::string>& known) {
  if (!j.is_object()) throw ValidationError(where + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    if (std::find(known.begin(), known.end(), k) == known.end()) {
      throw ValidationError(where + ": unknown field '" + k + "'");
    }
  }
}

template <typename T>
void read_number(const Json& j, const char* key, T& dst, const std::string& where) {
  if (!j.contains(key)) return;
  const auto& v = j[key];
  if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_unsigned()) throw ValidationError(where + "." + key + ": expected a non-negative integer");
  } else {
    if (!v.is_number()) throw ValidationError(where + "." + key + ": expected a number");
  }
  dst = v.get<T>();
}

RunConfig load_run_config(const Flags& f) {
  RunConfig rc;
  if (!f.config.empty()) {
    Json j = read_json_file(f.config);
    const std::string w = f.config;
    require_object(j, w, {"schema_version", "seed", "world", "model", "train", "loss", "max_len"});
    if (!j.contains("schema_version") || !j["schema_version"].is_number_integer() ||
        j["schema_version"].get<int>() != kSchemaVersion) {
      throw ValidationError(w + ": schema_version must be " + std::to_string(kSchemaVersion));
    }
    read_number(j, "seed", rc.seed, w);
    read_number(j, "max_len", rc.max_len, w);
    for (const char* section : {"world", "model"}) {
      if (!j.contains(section)) continue;
      if (!j[section].is_object()) throw ValidationError(w + "." + section + ": expected an object");
      if (j[section].contains("seed")) {
        throw ValidationError(w + "." + section + ": set the seed at the top level, not per section");
      }
    }
    if (j.contains("world")) rc.world = j["world"];
    if (j.contains("model")) rc.model = j["model"];
    if (j.contains("train")) {
      const auto& t = j["train"];
      const std::string tw = w + ".train";
      require_object(t, tw, {"lr", "beta1", "beta2", "adam_eps", "weight_decay", "warmup_epochs", "epochs",
                             "batch_size", "grad_clip"});
      read_number(t, "lr", rc.train.lr, tw);
      read_number(t, "beta1", rc.train.beta1, tw);
      read_number(t, "beta2", rc.train.beta2, tw);
      read_number(t, "adam_eps", rc.train.adam_eps, tw);
      read_number(t, "weight_decay", rc.train.weight_decay, tw);
      read_number(t, "warmup_epochs", rc.train.warmup_epochs, tw);
      read_number(t, "epochs", rc.train.epochs, tw);
      read_number(t, "batch_size", rc.train.batch_size, tw);
      read_number(t, "grad_clip", rc.train.grad_clip, tw);
    }
    if (j.contains("loss")) {
      const auto& l = j["loss"];
      const std::string lw = w + ".loss";
      require_object(l, lw, {"type", "lambda", "label_smoothing"});
      if (l.contains("type")) {
        if (!l["type"].is_string()) throw ValidationError(lw + ".type: expected \"vl\" or \"mle\"");
        auto type = l["type"].get<std::string>();
        if (type != "vl" && type != "mle") throw ValidationError(lw + ".type: expected \"vl\" or \"mle\", got " + type);
        rc.loss.contrastive = type == "vl";
      }
      read_number(l, "lambda", rc.loss.lambda, lw);
      read_number(l, "label_smoothing", rc.loss.label_smoothing, lw);
    }
  }
  if (f.seed) rc.seed = *f.seed;
  if (f.max_len) rc.max_len = *f.max_len;
  if (f.epochs) rc.train.epochs = *f.epochs;
  if (f.k) rc.model["k"] = *f.k;
  if (!f.modalities.empty()) rc.model["modalities"] = f.modalities;
  if (!f.loss.empty()) rc.loss.contrastive = f.loss == "vl";
  if (rc.train.warmup_epochs > rc.train.epochs) rc.train.warmup_epochs = rc.train.epochs;
  rc.world["seed"] = rc.seed;
  rc.model["seed"] = rc.seed;
  rc.train.seed = rc.seed;
  rc.train.validate();
  rc.loss.validate();
  if (rc.max_len < 1) throw ValidationError("max_len must be >= 1");
  return rc;
}

/// Model config from the run config; input widths missing from the file are
/// taken from the data.
ModelConfig resolve_model(const RunConfig& rc, const std::vector<VideoRecord>& videos, const VocabEmbeddingTable* table) {
  Json m = rc.model;
  auto infer = [&](const char* key, std::optional<std::size_t> v) {
    if (!m.contains(key) && v) m[key] = *v;
  };
  std::optional<std::size_t> d_env, d_agent, d_ling;
  for (const auto& v : videos)
    for (const auto& e : v.events)
      for (const auto& s : e.snippets) {
        if (!d_env) d_env = s.env_feature.size();
        if (!d_agent && s.agent_features.rows > 0) d_agent = s.agent_features.cols;
        if (!d_ling && s.linguistic) d_ling = s.linguistic->cols;
      }
  if (!d_ling && table) d_ling = table->feature_dim();
  infer("d_env", d_env);
  infer("d_agent", d_agent);
  infer("d_ling", d_ling);
  return model_config_from_json(m, "config.model");
}

// ---------------------------------------------------------------------------
// Output helpers

fs::path out_dir(const Flags& f) {
  fs::path p = f.out.empty() ? fs::path(".") : fs::path(f.out);
  fs::create_directories(p);
  return p;
}

void write_json(const fs::path& path, const Json& j) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot write '" + path.string() + "'");
  os << j.dump(2) << '\n';
}

std::optional<VocabEmbeddingTable> maybe_table(const Flags& f) {
  if (f.table.empty()) return std::nullopt;
  return load_table(f.table);
}

// ---------------------------------------------------------------------------
// Commands

int cmd_gen_data(const Flags& f) {
  RunConfig rc = load_run_config(f);
  auto spec = world_spec_from_json(rc.world, "config.world");
  auto ds = generate_synthetic(spec);
  auto dir = out_dir(f);
  Json config = rc.to_json();
  config["world"] = world_spec_to_json(spec);
  save_dataset((dir / "train.jsonl").string(), ds.train);
  save_dataset((dir / "heldout.jsonl").string(), ds.heldout);
  Json table = table_to_json(ds.table);
  table["config"] = config;
  write_json(dir / "table.json", table);
  write_json(dir / "run_config.json", config);
  std::cout << Json{{"train_videos", ds.train.size()}, {"heldout_videos", ds.heldout.size()},
                    {"out", dir.string()}}.dump()
            << '\n';
  return 0;
}

int cmd_train(const Flags& f) {
  RunConfig rc = load_run_config(f);
  auto videos = load_dataset(f.manifest);
  if (videos.empty()) throw ValidationError(f.manifest + ": manifest has no videos");
  auto table = maybe_table(f);
  const VocabEmbeddingTable* tp = table ? &*table : nullptr;
  ModelConfig mc = resolve_model(rc, videos, tp);
  VLTinTModel model(mc, build_vocab(captions_of(videos)));

  Json config = rc.to_json();
  config["model"] = model_config_to_json(mc);
  config["manifest"] = f.manifest;
  config["table"] = f.table;
  if (table) config["table_tokens"] = table->tokens;
  auto dir = out_dir(f);
  std::ofstream log(dir / "train_log.jsonl");
  if (!log) throw ValidationError("cannot write train log in '" + dir.string() + "'");
  log << Json{{"config", config}}.dump() << '\n';
  auto result = train(model, videos, tp, rc.train, rc.loss, [&](const EpochLog& e) {
    log << e.to_json().dump() << '\n';
    log.flush();
  });
  save_checkpoint((dir / "checkpoint.json").string(), model, config);
  auto stats = teacher_forced_stats(model, videos, tp);
  Json summary{{"epochs", rc.train.epochs}, {"steps", result.steps},
               {"final_loss", result.log.empty() ? Json(nullptr) : Json(result.log.back().loss)},
               {"train_accuracy", stats.accuracy},
               {"checkpoint", (dir / "checkpoint.json").string()}};
  std::cout << summary.dump() << '\n';
  return 0;
}

struct Loaded {
  VLTinTModel model;
  std::vector<VideoRecord> videos;
  std::optional<VocabEmbeddingTable> table;
  RunConfig rc;
  Json config;
};

Loaded load_for_inference(const Flags& f) {
  RunConfig rc = load_run_config(f);
  Json ckpt = read_json_file(f.checkpoint);
  auto model = model_from_checkpoint(ckpt, f.checkpoint);
  auto videos = load_dataset(f.manifest);
  auto table = maybe_table(f);
  Json config = ckpt["config"];
  if (table && config.contains("table_tokens")) {
    check_table_tokens(config["table_tokens"].get<std::vector<std::string>>(), *table);
  }
  config.erase("vocab");
  config.erase("table_tokens");
  config["max_len"] = rc.max_len;
  config["seed"] = rc.seed;
  config["checkpoint"] = f.checkpoint;
  config["manifest"] = f.manifest;
  return {std::move(model), std::move(videos), std::move(table), rc, config};
}

int cmd_eval(const Flags& f) {
  auto l = load_for_inference(f);
  auto ev = evaluate(l.model, l.videos, l.table ? &*l.table : nullptr, l.rc.max_len);
  Json report{{"config", l.config}, {"metrics", ev.report.to_json()}};
  if (!f.out.empty()) write_json(out_dir(f) / "report.json", report);
  std::cout << ev.report.to_json().dump() << '\n';
  return 0;
}

int cmd_decode(const Flags& f) {
  auto l = load_for_inference(f);
  auto decoded = decode_dataset(l.model, l.videos, l.table ? &*l.table : nullptr, l.rc.max_len);
  auto dir = out_dir(f);
  std::ofstream os(dir / "decoded.jsonl");
  if (!os) throw ValidationError("cannot write decoded.jsonl in '" + dir.string() + "'");
  for (const auto& d : decoded) os << Json{{"video_id", d.video_id}, {"sentences", d.sentences}, {"config", l.config}}.dump() << '\n';
  std::cout << Json{{"videos", decoded.size()}, {"out", (dir / "decoded.jsonl").string()}}.dump() << '\n';
  return 0;
}

/// Primitive probes over three seeds, then the full objective on a tiny model:
/// d=8, 2 layers, 1 head, 2 snippets, up to 3 agents, 2 videos of 2 events.
int cmd_gradcheck(const Flags& f) {
  RunConfig rc = load_run_config(f);
  constexpr double kPrimitiveTol = 1e-6, kObjectiveTol = 1e-4;
  Json primitives = Json::object();
  double worst_primitive = 0.0;
  for (const auto& p : primitive_probes()) {
    double worst = 0.0;
    for (std::uint64_t s = rc.seed; s < rc.seed + 3; ++s) worst = std::max(worst, check_probe(p, s));
    primitives[p.name] = worst;
    worst_primitive = std::max(worst_primitive, worst);
  }

  SyntheticWorldSpec w;
  w.d_env = w.d_a = w.d_clip = w.d_l = 4;
  w.n_videos = 2;
  w.events_per_video = 2;
  w.snippets_per_event = 2;
  w.max_agents = 3;
  w.miss_rate = 0.0;
  w.seed = rc.seed;
  auto ds = generate_synthetic(w);
  ModelConfig mc;
  mc.d_emb = 8;
  mc.n_layers = 2;
  mc.n_heads = 1;
  mc.ffn_hidden = 16;
  mc.d_env = mc.d_agent = mc.d_ling = 4;
  mc.max_video_len = 2;
  mc.max_text_len = 7;
  mc.seed = rc.seed;
  VLTinTModel model(mc, build_vocab(captions_of(ds.train)));
  auto rep = objective_gradcheck(model, ds.train, &ds.table, rc.loss);

  bool ok = worst_primitive <= kPrimitiveTol && rep.worst <= kObjectiveTol;
  Json report{{"config", rc.to_json()},
              {"primitives", primitives},
              {"primitive_worst", worst_primitive},
              {"primitive_tolerance", kPrimitiveTol},
              {"objective_worst", rep.worst},
              {"objective_worst_param", rep.worst_param},
              {"objective_scalars", rep.scalars},
              {"objective_tolerance", kObjectiveTol},
              {"pass", ok}};
  if (!f.out.empty()) write_json(out_dir(f) / "gradcheck.json", report);
  std::cout << Json{{"primitive_worst", worst_primitive}, {"objective_worst", rep.worst}, {"pass", ok}}.dump() << '\n';
  if (!ok) {
    std::cerr << "vltint gradcheck: gradient check failed\n";
    return kExitNumerical;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"VLTinT video paragraph captioning at desk scale"};
  app.require_subcommand(1);
  Flags f;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "JSON run config (schema_version 1)")->check(CLI::ExistingFile);
    sub->add_option("--seed", f.seed, "Seed for data, initialization and shuffling");
  };
  auto add_inference = [&](CLI::App* sub) {
    sub->add_option("--checkpoint", f.checkpoint, "Checkpoint from `train`")->required()->check(CLI::ExistingFile);
    sub->add_option("--manifest", f.manifest, "Video manifest (JSON lines)")->required()->check(CLI::ExistingFile);
    sub->add_option("--table", f.table, "Vocabulary embedding table")->check(CLI::ExistingFile);
    sub->add_option("--max-len", f.max_len, "Maximum decoded tokens per event")->check(CLI::PositiveNumber);
  };

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic manifest pair and embedding table");
  add_common(gen);
  gen->add_option("--out", f.out, "Output directory")->required();

  auto* tr = app.add_subcommand("train", "Train a model and write checkpoint.json and train_log.jsonl");
  add_common(tr);
  tr->add_option("--manifest", f.manifest, "Training manifest (JSON lines)")->required()->check(CLI::ExistingFile);
  tr->add_option("--table", f.table, "Vocabulary embedding table")->check(CLI::ExistingFile);
  tr->add_option("--out", f.out, "Output directory")->required();
  tr->add_option("--modalities", f.modalities, "Comma-separated subset of env,agent,ling")
      ->delimiter(',')
      ->check(CLI::IsMember({"env", "agent", "ling"}));
  tr->add_option("--loss", f.loss, "Training objective")->check(CLI::IsMember({"vl", "mle"}));
  tr->add_option("--k", f.k, "Scene elements per snippet")->check(CLI::PositiveNumber);
  tr->add_option("--epochs", f.epochs, "Override the number of epochs");

  auto* ev = app.add_subcommand("eval", "Greedy-decode a manifest and report metrics");
  add_common(ev);
  add_inference(ev);
  ev->add_option("--out", f.out, "Directory for report.json");

  auto* dec = app.add_subcommand("decode", "Write greedy paragraphs as decoded.jsonl");
  add_common(dec);
  add_inference(dec);
  dec->add_option("--out", f.out, "Output directory")->required();

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference checks of primitives and the training objective");
  add_common(gc);
  gc->add_option("--out", f.out, "Directory for gradcheck.json");
  gc->add_option("--loss", f.loss, "Objective to check")->check(CLI::IsMember({"vl", "mle"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_data(f);
    if (*tr) return cmd_train(f);
    if (*ev) return cmd_eval(f);
    if (*dec) return cmd_decode(f);
    if (*gc) return cmd_gradcheck(f);
  } catch (const NumericalError& e) {
    std::cerr << "vltint: numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const ValidationError& e) {
    std::cerr << "vltint: validation error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const Json::exception& e) {
    std::cerr << "vltint: validation error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "vltint: validation error: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitUsage;
}
