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

// Checkpoints, corpus and prompt ingestion.
//
// Checkpoint layout (all integers little-endian):
//   bytes 0..7    magic "SPECDRFT"
//   u32           format version
//   u64           header length H
//   H bytes       UTF-8 JSON header: kind, config, tensors[{name, shape,
//                 dtype "f32", offset}], payload_bytes
//   payload       f32 little-endian arrays in manifest order
//   u32           CRC-32 (zlib polynomial) of the payload

#pragma once

#include "specdraft/adversarial.hpp"
#include "specdraft/heads.hpp"
#include "specdraft/target.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace specdraft {

inline constexpr char kCheckpointMagic[8] = {'S', 'P', 'E', 'C', 'D', 'R', 'F', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  std::string kind;
  nlohmann::json config;
  ParamList<float> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const std::string& kind, const nlohmann::json& config,
                     const ParamList<float>& tensors, std::uint32_t version = kCheckpointVersion);
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json to_json(const TargetConfig& c);
TargetConfig target_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const HeadConfig& c);
HeadConfig head_config_from_json(const nlohmann::json& j);

void save_target(const std::filesystem::path& path, const TargetModel& model);
// The loaded model is frozen.
TargetModel load_target(const std::filesystem::path& path);

void save_head(const std::filesystem::path& path, const DraftHead& head);
std::unique_ptr<DraftHead> load_head(const std::filesystem::path& path, const TargetModel& target);

void save_discriminator(const std::filesystem::path& path, const Discriminator& disc);

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Regular files of `dir` concatenated in lexicographic filename order.
std::vector<std::uint8_t> load_corpus(const std::filesystem::path& dir);

// {"prompts": ["...", ...]} as byte-token sequences.
std::vector<std::vector<int>> load_prompts(const std::filesystem::path& path);

std::vector<int> bytes_to_tokens(const std::string& text);
std::string tokens_to_bytes(const std::vector<int>& tokens);

}  // namespace specdraft
