/* Copyright 2026 The specdraft Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "specdraft/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

namespace specdraft {

namespace fs = std::filesystem;

namespace {

// Reads keys out of one JSON object and remembers which were consumed, so
// leftovers can be reported as unknown.
class Section {
 public:
  Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const auto& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("");
      } else {
        if (!v.is_string()) throw ConfigError("");
      }
      out = v.get<T>();
    } catch (const std::exception&) {
      throw ConfigError(path_ + "." + key + ": wrong type (" + v.type_name() + ")");
    }
  }

  void read_path(const char* key, fs::path& out) {
    std::string s = out.string();
    read(key, s);
    out = s;
  }

  bool has(const char* key) const { return j_.contains(key); }

  Section child(const char* key) {
    seen_.insert(key);
    return Section(j_.at(key), path_ + "." + key);
  }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(path_ + "." + key + ": unknown key");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename F>
void validated(const std::string& path, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

fs::path resolve(const fs::path& base, const fs::path& p) { return p.is_absolute() ? p : base / p; }

void env_override(const char* name, fs::path& out) {
  if (const char* v = std::getenv(name); v && *v) out = v;
}

}  // namespace

HeadConfig RunConfig::head_config(HeadKind kind, int K) const {
  HeadConfig c = head_config_for(target, kind, K);
  c.draft_len = head.draft_len;
  c.medusa_heads = head.medusa_heads;
  c.validate();
  return c;
}

TrainConfig RunConfig::train_config(bool adversarial) const {
  TrainConfig c = train;
  c.adversarial = adversarial;
  if (!adversarial) c.lambda = 0;
  c.seed = seed;
  return c;
}

void require_exists(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) throw ConfigError(what + " not found: " + path.string());
}

RunConfig parse_run_config(const nlohmann::json& doc, const fs::path& base_dir) {
  RunConfig c;
  Section root(doc, "$");
  root.read("seed", c.seed);

  if (root.has("target")) {
    Section s = root.child("target");
    s.read("vocab_size", c.target.vocab_size);
    s.read("d_model", c.target.d_model);
    s.read("n_layers", c.target.n_layers);
    s.read("n_heads", c.target.n_heads);
    s.read("max_seq_len", c.target.max_seq_len);
    s.read("ff_mult", c.target.ff_mult);
    s.finish();
  }
  validated("$.target", [&] { c.target.validate(); });

  c.target_train.seq_len = c.target.max_seq_len;
  if (root.has("target_train")) {
    Section s = root.child("target_train");
    s.read("steps", c.target_train.steps);
    s.read("batch", c.target_train.batch);
    s.read("seq_len", c.target_train.seq_len);
    s.read("lr", c.target_train.optimizer.learning_rate);
    s.read("warmup", c.target_train.warmup);
    s.read("clip_norm", c.target_train.optimizer.clip_norm);
    s.finish();
  }
  validated("$.target_train", [&] {
    c.target_train.optimizer.validate();
    if (c.target_train.steps < 1 || c.target_train.batch < 1) throw std::invalid_argument("steps and batch must be >= 1");
    if (c.target_train.seq_len < 2 || c.target_train.seq_len > c.target.max_seq_len) {
      throw std::invalid_argument("seq_len must lie in [2, target.max_seq_len]");
    }
    if (c.target_train.warmup < 0) throw std::invalid_argument("warmup must be >= 0");
  });
  c.target_train.seed = c.seed;

  if (root.has("head")) {
    Section s = root.child("head");
    s.read("draft_len", c.head.draft_len);
    s.read("medusa_heads", c.head.medusa_heads);
    s.finish();
  }
  validated("$.head", [&] {
    c.head_config(HeadKind::medusa, 1);
    c.head_config(HeadKind::eagle, 1);
  });

  if (root.has("train")) {
    Section s = root.child("train");
    s.read("lambda", c.train.lambda);
    s.read("g_steps", c.train.g_steps);
    s.read("d_steps", c.train.d_steps);
    s.read("lr_g", c.train.lr_g);
    s.read("lr_d", c.train.lr_d);
    std::string optimizer = c.train.optimizer == OptimizerKind::adam ? "adam" : "sgd";
    s.read("optimizer", optimizer);
    if (optimizer != "adam" && optimizer != "sgd") {
      throw ConfigError("$.train.optimizer: expected \"adam\" or \"sgd\", got \"" + optimizer + "\"");
    }
    c.train.optimizer = optimizer == "adam" ? OptimizerKind::adam : OptimizerKind::sgd;
    s.read("max_epochs", c.train.max_epochs);
    s.read("steps_per_epoch", c.train.steps_per_epoch);
    s.read("batch", c.train.batch);
    s.read("nash_window", c.train.nash_window);
    s.read("nash_lo", c.train.nash_lo);
    s.read("nash_hi", c.train.nash_hi);
    s.read("disc_width", c.train.disc_width);
    s.read("cache_windows", c.train.cache_windows);
    s.read("cache_window_len", c.train.cache_window_len);
    s.finish();
  }
  validated("$.train", [&] {
    c.train.validate();
    if (c.train.cache_window_len > c.target.max_seq_len) {
      throw std::invalid_argument("cache_window_len exceeds target.max_seq_len");
    }
  });

  if (root.has("bench")) {
    Section s = root.child("bench");
    s.read("max_new", c.bench.max_new);
    s.read("temperature", c.bench.temperature);
    s.read("repetitions", c.bench.repetitions);
    s.finish();
  }
  validated("$.bench", [&] {
    if (c.bench.max_new < 1) throw std::invalid_argument("max_new must be >= 1");
    if (c.bench.temperature < 0) throw std::invalid_argument("temperature must be >= 0");
    if (c.bench.repetitions < 1) throw std::invalid_argument("repetitions must be >= 1");
  });

  if (root.has("paths")) {
    Section s = root.child("paths");
    s.read_path("corpus_dir", c.paths.corpus_dir);
    s.read_path("checkpoint_dir", c.paths.checkpoint_dir);
    s.read_path("output_dir", c.paths.output_dir);
    s.read_path("prompts", c.paths.prompts);
    s.finish();
  }
  root.finish();

  env_override("SPECDRAFT_CORPUS_DIR", c.paths.corpus_dir);
  env_override("SPECDRAFT_CHECKPOINT_DIR", c.paths.checkpoint_dir);
  env_override("SPECDRAFT_OUTPUT_DIR", c.paths.output_dir);
  env_override("SPECDRAFT_PROMPTS", c.paths.prompts);
  c.paths.corpus_dir = resolve(base_dir, c.paths.corpus_dir);
  c.paths.checkpoint_dir = resolve(base_dir, c.paths.checkpoint_dir);
  c.paths.output_dir = resolve(base_dir, c.paths.output_dir);
  c.paths.prompts = resolve(base_dir, c.paths.prompts);
  require_exists(c.paths.corpus_dir, "corpus directory");
  require_exists(c.paths.prompts, "prompt file");
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(doc, fs::absolute(path).parent_path());
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  j["target"] = {{"vocab_size", c.target.vocab_size}, {"d_model", c.target.d_model},
                 {"n_layers", c.target.n_layers},     {"n_heads", c.target.n_heads},
                 {"max_seq_len", c.target.max_seq_len}, {"ff_mult", c.target.ff_mult}};
  j["target_train"] = {{"steps", c.target_train.steps},
                       {"batch", c.target_train.batch},
                       {"seq_len", c.target_train.seq_len},
                       {"lr", c.target_train.optimizer.learning_rate},
                       {"warmup", c.target_train.warmup},
                       {"clip_norm", c.target_train.optimizer.clip_norm}};
  j["head"] = {{"draft_len", c.head.draft_len}, {"medusa_heads", c.head.medusa_heads}};
  const auto& t = c.train;
  j["train"] = {{"lambda", t.lambda},
                {"g_steps", t.g_steps},
                {"d_steps", t.d_steps},
                {"lr_g", t.lr_g},
                {"lr_d", t.lr_d},
                {"optimizer", t.optimizer == OptimizerKind::adam ? "adam" : "sgd"},
                {"max_epochs", t.max_epochs},
                {"steps_per_epoch", t.steps_per_epoch},
                {"batch", t.batch},
                {"nash_window", t.nash_window},
                {"nash_lo", t.nash_lo},
                {"nash_hi", t.nash_hi},
                {"disc_width", t.disc_width},
                {"cache_windows", t.cache_windows},
                {"cache_window_len", t.cache_window_len}};
  j["bench"] = {{"max_new", c.bench.max_new}, {"temperature", c.bench.temperature},
                {"repetitions", c.bench.repetitions}};
  j["paths"] = {{"corpus_dir", c.paths.corpus_dir.string()},
                {"checkpoint_dir", c.paths.checkpoint_dir.string()},
                {"output_dir", c.paths.output_dir.string()},
                {"prompts", c.paths.prompts.string()}};
  return j;
}

}  // namespace specdraft
