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

#include "fixtures.hpp"

#include "specdraft/config.hpp"
#include "specdraft/io.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>

namespace specdraft {
namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("specdraft_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                        "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

TEST(Checkpoint, TargetRoundTripIsBitIdentical) {
  TempDir dir;
  const TargetModel m = testing_fixtures::tiny_target(1);
  save_target(dir.path / "t.ckpt", m);
  const TargetModel back = load_target(dir.path / "t.ckpt");
  EXPECT_EQ(back.weights_hash(), m.weights_hash());
  EXPECT_EQ(back.config(), m.config());
  EXPECT_TRUE(back.frozen());
}

TEST(Checkpoint, HeadRoundTripIsBitIdentical) {
  TempDir dir;
  const TargetModel m = testing_fixtures::tiny_target(2);
  for (HeadKind kind : {HeadKind::medusa, HeadKind::eagle}) {
    const auto head = make_head(head_config_for(m.config(), kind, 2), m, 5);
    save_head(dir.path / "h.ckpt", *head);
    const auto back = load_head(dir.path / "h.ckpt", m);
    EXPECT_EQ(params_hash(back->parameters()), params_hash(head->parameters()));
    EXPECT_EQ(back->config(), head->config());
  }
}

TEST(Checkpoint, SavingTwiceGivesIdenticalBytes) {
  TempDir dir;
  const TargetModel m = testing_fixtures::tiny_target(3);
  save_target(dir.path / "a.ckpt", m);
  save_target(dir.path / "b.ckpt", m);
  EXPECT_EQ(slurp(dir.path / "a.ckpt"), slurp(dir.path / "b.ckpt"));
}

TEST(Checkpoint, TruncatedFileIsRejectedByChecksum) {
  TempDir dir;
  save_target(dir.path / "t.ckpt", testing_fixtures::tiny_target(4));
  std::string bytes = slurp(dir.path / "t.ckpt");
  spit(dir.path / "t.ckpt", bytes.substr(0, bytes.size() - 100));
  try {
    load_target(dir.path / "t.ckpt");
    FAIL() << "truncated checkpoint loaded";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, FlippedPayloadByteIsRejected) {
  TempDir dir;
  save_target(dir.path / "t.ckpt", testing_fixtures::tiny_target(5));
  std::string bytes = slurp(dir.path / "t.ckpt");
  bytes[bytes.size() - 50] ^= 0x01;
  spit(dir.path / "t.ckpt", bytes);
  EXPECT_THROW(load_target(dir.path / "t.ckpt"), CheckpointError);
}

TEST(Checkpoint, VersionMismatchNamesBothVersions) {
  TempDir dir;
  const TargetModel m = testing_fixtures::tiny_target(6);
  save_checkpoint(dir.path / "v.ckpt", "target", to_json(m.config()), m.parameters(), kCheckpointVersion + 1);
  try {
    load_checkpoint(dir.path / "v.ckpt");
    FAIL() << "future version loaded";
  } catch (const CheckpointError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(std::to_string(kCheckpointVersion + 1)), std::string::npos) << msg;
    EXPECT_NE(msg.find(std::to_string(kCheckpointVersion)), std::string::npos) << msg;
  }
}

TEST(Checkpoint, ManifestOffsetsIncreaseWithoutOverlap) {
  TempDir dir;
  const TargetModel m = testing_fixtures::tiny_target(7);
  save_target(dir.path / "t.ckpt", m);
  const std::string bytes = slurp(dir.path / "t.ckpt");
  ASSERT_EQ(bytes.substr(0, 8), "SPECDRFT");
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= std::uint64_t(static_cast<unsigned char>(bytes[12 + i])) << (8 * i);
  const auto header = nlohmann::json::parse(bytes.substr(20, len));
  std::uint64_t next = 0;
  for (const auto& t : header["tensors"]) {
    EXPECT_EQ(t["offset"].get<std::uint64_t>(), next);
    EXPECT_EQ(t["dtype"], "f32");
    next += 4 * t["shape"][0].get<std::uint64_t>() * t["shape"][1].get<std::uint64_t>();
  }
  EXPECT_EQ(header["payload_bytes"].get<std::uint64_t>(), next);
}

TEST(Checkpoint, GoldenFixtureLoads) {
  const fs::path golden = fs::path(SPECDRAFT_FIXTURE_DIR) / "golden_medusa_k1.ckpt";
  const Checkpoint ck = load_checkpoint(golden);
  EXPECT_EQ(ck.kind, "medusa");
  EXPECT_EQ(params_hash(ck.tensors), 0x6d3cc7fdcf091d1dULL);
  const auto head = load_head(golden, testing_fixtures::tiny_target(1));
  EXPECT_EQ(head->config().K, 1);
  EXPECT_EQ(head->config().d_model, 32);
}

TEST(Corpus, FilesConcatenateInNameOrder) {
  TempDir dir;
  spit(dir.path / "b.txt", "world");
  spit(dir.path / "a.txt", "hello ");
  const auto bytes = load_corpus(dir.path);
  EXPECT_EQ(std::string(bytes.begin(), bytes.end()), "hello world");
}

TEST(Corpus, MissingDirectoryNamesPath) {
  try {
    load_corpus("/nonexistent/corpus");
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/corpus"), std::string::npos);
  }
}

TEST(Prompts, BytesBecomeTokens) {
  TempDir dir;
  spit(dir.path / "p.json", R"({"prompts": ["Hi", "é"]})");
  const auto p = load_prompts(dir.path / "p.json");
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p[0], (std::vector<int>{72, 105}));
  EXPECT_EQ(p[1], (std::vector<int>{0xc3, 0xa9}));
  EXPECT_EQ(tokens_to_bytes(p[1]), "\xc3\xa9");
}

struct ConfigFixture : ::testing::Test {
  TempDir dir;
  void SetUp() override {
    fs::create_directories(dir.path / "corpus");
    spit(dir.path / "corpus" / "c.txt", "abc");
    spit(dir.path / "prompts.json", R"({"prompts": ["x"]})");
  }
  nlohmann::json doc() const {
    return {{"paths", {{"corpus_dir", "corpus"}, {"prompts", "prompts.json"}}}};
  }
};

TEST_F(ConfigFixture, DefaultsFillMissingSections) {
  const RunConfig c = parse_run_config(doc(), dir.path);
  EXPECT_EQ(c.target.n_layers, 6);
  EXPECT_DOUBLE_EQ(c.train.lambda, 0.1);
  EXPECT_EQ(c.train.nash_window, 5);
  EXPECT_EQ(c.paths.corpus_dir, dir.path / "corpus");
}

TEST_F(ConfigFixture, UnknownKeyReportsJsonPath) {
  auto d = doc();
  d["train"] = {{"lamda", 0.2}};
  try {
    parse_run_config(d, dir.path);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("$.train.lamda"), std::string::npos) << e.what();
  }
}

TEST_F(ConfigFixture, WrongTypeRejected) {
  auto d = doc();
  d["bench"] = {{"repetitions", "three"}};
  EXPECT_THROW(parse_run_config(d, dir.path), ConfigError);
}

TEST_F(ConfigFixture, InvalidValueReportsSection) {
  auto d = doc();
  d["train"] = {{"nash_window", 0}};
  try {
    parse_run_config(d, dir.path);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("$.train"), std::string::npos) << e.what();
  }
}

TEST_F(ConfigFixture, MissingCorpusNamesPath) {
  auto d = doc();
  d["paths"]["corpus_dir"] = "nowhere";
  try {
    parse_run_config(d, dir.path);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("nowhere"), std::string::npos) << e.what();
  }
}

TEST_F(ConfigFixture, EnvironmentOverridesPaths) {
  fs::create_directories(dir.path / "other");
  spit(dir.path / "other" / "c.txt", "z");
  ::setenv("SPECDRAFT_CORPUS_DIR", (dir.path / "other").c_str(), 1);
  const RunConfig c = parse_run_config(doc(), dir.path);
  ::unsetenv("SPECDRAFT_CORPUS_DIR");
  EXPECT_EQ(c.paths.corpus_dir, dir.path / "other");
}

TEST_F(ConfigFixture, NoAdversaryForcesZeroLambda) {
  const RunConfig c = parse_run_config(doc(), dir.path);
  EXPECT_DOUBLE_EQ(c.train_config(false).lambda, 0.0);
  EXPECT_FALSE(c.train_config(false).adversarial);
  EXPECT_DOUBLE_EQ(c.train_config(true).lambda, 0.1);
}

TEST(DeskConfig, CommittedConfigParses) {
  const RunConfig c = load_run_config(fs::path(SPECDRAFT_SOURCE_DIR) / "configs" / "desk.json");
  EXPECT_EQ(c.target.d_model, 128);
  EXPECT_EQ(c.target.n_layers, 6);
  EXPECT_GE(c.train.lambda, 0.05);
  EXPECT_LE(c.train.lambda, 0.5);
  EXPECT_GE(c.train.lr_g, 1e-5);
  EXPECT_LE(c.train.lr_g, 5e-4);
}

}  // namespace
}  // namespace specdraft
