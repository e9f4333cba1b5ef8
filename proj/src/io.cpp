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

#include "specdraft/io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace specdraft {

static_assert(std::endian::native == std::endian::little, "checkpoint payload is written in host order");

namespace fs = std::filesystem;

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le(const std::string& in, std::size_t at, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= std::uint64_t(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

std::uint32_t crc_of(const char* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

void save_checkpoint(const fs::path& path, const std::string& kind, const nlohmann::json& config,
                     const ParamList<float>& tensors, std::uint32_t version) {
  nlohmann::json header;
  header["kind"] = kind;
  header["config"] = config;
  header["tensors"] = nlohmann::json::array();
  std::string payload;
  for (const auto& p : tensors) {
    nlohmann::json entry;
    entry["name"] = p.name;
    entry["shape"] = {p.tensor.rows(), p.tensor.cols()};
    entry["dtype"] = "f32";
    entry["offset"] = payload.size();
    header["tensors"].push_back(std::move(entry));
    const auto* bytes = reinterpret_cast<const char*>(p.tensor.value().data());
    payload.append(bytes, sizeof(float) * static_cast<std::size_t>(p.tensor.numel()));
  }
  header["payload_bytes"] = payload.size();
  const std::string head = header.dump();

  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  put_u32(out, version);
  put_u64(out, head.size());
  out += head;
  out += payload;
  put_u32(out, crc_of(payload.data(), payload.size()));

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("cannot write checkpoint " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw CheckpointError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  const std::string data = read_file(path);
  const std::string where = " in " + path.string();
  if (data.size() < 20 || std::memcmp(data.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw CheckpointError("not a specdraft checkpoint (bad magic)" + where);
  }
  const auto version = static_cast<std::uint32_t>(get_le(data, 8, 4));
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint format version " + std::to_string(version) + " is not supported; this build reads version " +
                          std::to_string(kCheckpointVersion) + where);
  }
  const std::uint64_t head_len = get_le(data, 12, 8);
  if (head_len > data.size() - 20) throw CheckpointError("checkpoint checksum mismatch: file truncated inside the header" + where);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(data.begin() + 20, data.begin() + 20 + static_cast<std::ptrdiff_t>(head_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint header is not valid JSON: ") + e.what() + where);
  }
  const std::size_t payload_at = 20 + head_len;
  const std::uint64_t payload_bytes = header.at("payload_bytes").get<std::uint64_t>();
  if (data.size() != payload_at + payload_bytes + 4) {
    throw CheckpointError("checkpoint checksum mismatch: expected " + std::to_string(payload_bytes) +
                          " payload bytes plus checksum, file holds " + std::to_string(data.size() - payload_at) + where);
  }
  const auto stored = static_cast<std::uint32_t>(get_le(data, payload_at + payload_bytes, 4));
  if (crc_of(data.data() + payload_at, payload_bytes) != stored) throw CheckpointError("checkpoint checksum mismatch" + where);

  Checkpoint ck;
  ck.kind = header.at("kind").get<std::string>();
  ck.config = header.at("config");
  std::uint64_t expected_offset = 0;
  for (const auto& entry : header.at("tensors")) {
    if (entry.at("dtype") != "f32") throw CheckpointError("unsupported dtype" + where);
    const auto shape = entry.at("shape").get<std::vector<Index>>();
    const auto offset = entry.at("offset").get<std::uint64_t>();
    if (shape.size() != 2 || shape[0] < 0 || shape[1] < 0) throw CheckpointError("bad tensor shape" + where);
    if (offset != expected_offset) throw CheckpointError("tensor manifest offsets are not contiguous" + where);
    const std::uint64_t bytes = sizeof(float) * static_cast<std::uint64_t>(shape[0] * shape[1]);
    if (offset + bytes > payload_bytes) throw CheckpointError("tensor extends past the payload" + where);
    RowMatrix<float> m(shape[0], shape[1]);
    std::memcpy(m.data(), data.data() + payload_at + offset, bytes);
    ck.tensors.push_back({entry.at("name").get<std::string>(), Tensor<float>::from(std::move(m))});
    expected_offset = offset + bytes;
  }
  if (expected_offset != payload_bytes) throw CheckpointError("payload has trailing bytes" + where);
  return ck;
}

nlohmann::json to_json(const TargetConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"d_model", c.d_model},         {"n_layers", c.n_layers},
          {"n_heads", c.n_heads},       {"max_seq_len", c.max_seq_len}, {"ff_mult", c.ff_mult}};
}

TargetConfig target_config_from_json(const nlohmann::json& j) {
  TargetConfig c;
  c.vocab_size = j.at("vocab_size");
  c.d_model = j.at("d_model");
  c.n_layers = j.at("n_layers");
  c.n_heads = j.at("n_heads");
  c.max_seq_len = j.at("max_seq_len");
  c.ff_mult = j.at("ff_mult");
  c.validate();
  return c;
}

nlohmann::json to_json(const HeadConfig& c) {
  return {{"kind", to_string(c.kind)},     {"K", c.K},         {"medusa_heads", c.medusa_heads},
          {"d_model", c.d_model},          {"vocab_size", c.vocab_size}, {"draft_len", c.draft_len},
          {"n_heads", c.n_heads},          {"ff_mult", c.ff_mult}};
}

HeadConfig head_config_from_json(const nlohmann::json& j) {
  HeadConfig c;
  c.kind = parse_head_kind(j.at("kind").get<std::string>());
  c.K = j.at("K");
  c.medusa_heads = j.at("medusa_heads");
  c.d_model = j.at("d_model");
  c.vocab_size = j.at("vocab_size");
  c.draft_len = j.at("draft_len");
  c.n_heads = j.at("n_heads");
  c.ff_mult = j.at("ff_mult");
  c.validate();
  return c;
}

void save_target(const fs::path& path, const TargetModel& model) {
  save_checkpoint(path, "target", to_json(model.config()), model.parameters());
}

TargetModel load_target(const fs::path& path) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.kind != "target") throw CheckpointError("checkpoint " + path.string() + " holds a " + ck.kind + ", not a target");
  TargetModel model = TargetModel::init(target_config_from_json(ck.config), 0);
  model.assign(ck.tensors);
  model.freeze();
  return model;
}

void save_head(const fs::path& path, const DraftHead& head) {
  save_checkpoint(path, to_string(head.config().kind), to_json(head.config()), head.parameters());
}

std::unique_ptr<DraftHead> load_head(const fs::path& path, const TargetModel& target) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.kind != "medusa" && ck.kind != "eagle") {
    throw CheckpointError("checkpoint " + path.string() + " holds a " + ck.kind + ", not a draft head");
  }
  const HeadConfig config = head_config_from_json(ck.config);
  auto head = make_head(config, target, 0);
  assign_parameters(*head, ck.tensors);
  return head;
}

void save_discriminator(const fs::path& path, const Discriminator& disc) {
  const auto& c = disc.config();
  nlohmann::json config{{"d_model", c.d_model}, {"vocab_size", c.vocab_size}, {"depth", c.depth}, {"width", c.width}};
  save_checkpoint(path, "discriminator", config, disc.parameters());
}

std::vector<std::uint8_t> load_corpus(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InputError("corpus directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
    return a.filename().string() < b.filename().string();
  });
  std::vector<std::uint8_t> out;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    out.insert(out.end(), std::istreambuf_iterator<char>(in), {});
  }
  if (out.empty()) throw InputError("corpus directory is empty: " + dir.string());
  return out;
}

std::vector<int> bytes_to_tokens(const std::string& text) {
  std::vector<int> out;
  out.reserve(text.size());
  for (unsigned char c : text) out.push_back(c);
  return out;
}

std::string tokens_to_bytes(const std::vector<int>& tokens) {
  std::string out;
  out.reserve(tokens.size());
  for (int t : tokens) out.push_back(static_cast<char>(t));
  return out;
}

std::vector<std::vector<int>> load_prompts(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("prompt file not found: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("prompt file " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!j.is_object() || !j.contains("prompts") || !j["prompts"].is_array()) {
    throw InputError("prompt file " + path.string() + " must hold {\"prompts\": [...]}");
  }
  std::vector<std::vector<int>> out;
  for (const auto& p : j["prompts"]) {
    auto tokens = bytes_to_tokens(p.get<std::string>());
    if (tokens.empty()) throw InputError("prompt file " + path.string() + " contains an empty prompt");
    out.push_back(std::move(tokens));
  }
  if (out.empty()) throw InputError("prompt file " + path.string() + " has no prompts");
  return out;
}

}  // namespace specdraft
