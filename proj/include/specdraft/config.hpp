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

// Run configuration. Every section is optional and falls back to defaults;
// unknown keys are rejected with their JSON path. Relative paths resolve
// against the directory holding the config file.

#pragma once

#include "specdraft/adversarial.hpp"
#include "specdraft/heads.hpp"
#include "specdraft/target.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace specdraft {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct HeadSection {
  int draft_len = 3;
  int medusa_heads = 3;
};

struct BenchSection {
  Index max_new = 128;
  double temperature = 0;
  int repetitions = 3;
};

struct PathsSection {
  std::filesystem::path corpus_dir = "data/corpus";
  std::filesystem::path checkpoint_dir = "checkpoints";
  std::filesystem::path output_dir = "out";
  std::filesystem::path prompts = "data/prompts.json";
};

struct RunConfig {
  std::uint64_t seed = 20240611;
  TargetConfig target;
  TargetTrainOptions target_train;
  HeadSection head;
  TrainConfig train;
  BenchSection bench;
  PathsSection paths;

  HeadConfig head_config(HeadKind kind, int K) const;
  // Per-run head training settings; the root seed feeds every stream.
  TrainConfig train_config(bool adversarial) const;
};

// Parses and validates. SPECDRAFT_CORPUS_DIR, SPECDRAFT_CHECKPOINT_DIR,
// SPECDRAFT_OUTPUT_DIR and SPECDRAFT_PROMPTS override the paths section.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = ".");
RunConfig load_run_config(const std::filesystem::path& path);

nlohmann::json to_json(const RunConfig& config);

// Raises ConfigError naming the path when it does not exist.
void require_exists(const std::filesystem::path& path, const std::string& what);

}  // namespace specdraft
