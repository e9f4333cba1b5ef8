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

// Byte-level decoder-only transformer used as the model being accelerated.
// It is trained once, frozen, and then only queried for logits and final
// hidden states.

#pragma once

#include "specdraft/block.hpp"
#include "specdraft/optim.hpp"
#include "specdraft/rng.hpp"
#include "specdraft/tensor.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace specdraft {

struct TargetConfig {
  int vocab_size = 256;
  int d_model = 128;
  int n_layers = 6;
  int n_heads = 4;
  int max_seq_len = 256;
  int ff_mult = 4;

  void validate() const;
  bool operator==(const TargetConfig&) const = default;
};

struct ContextOverflow : std::length_error {
  using std::length_error::length_error;
};

struct FrozenModelError : std::logic_error {
  using std::logic_error::logic_error;
};

// Per-position outputs: logits (len x vocab) and final hidden states
// (len x d_model), the latter being the direct input of the LM head.
struct TargetOutput {
  RowMatrix<float> logits;
  RowMatrix<float> hidden;
};

class TargetModel {
 public:
  static TargetModel init(const TargetConfig& config, std::uint64_t seed);

  const TargetConfig& config() const { return config_; }
  ParamList<float> parameters() const;
  std::uint64_t weights_hash() const { return params_hash(parameters()); }

  bool frozen() const { return frozen_; }
  void freeze();

  // Copies values from `source` (matched by name and shape). Refused once frozen.
  void assign(const ParamList<float>& source);
  void zero_lm_head();

  struct TrainForward {
    Tensor<float> hidden;
    Tensor<float> logits;
  };
  // Differentiable forward over `batch` sequences of `seq_len` tokens laid
  // out contiguously in `tokens`.
  TrainForward forward_train(std::span<const int> tokens, Index batch, Index seq_len) const;

  const Tensor<float>& lm_head() const { return lm_head_; }
  const Tensor<float>& token_embedding() const { return tok_emb_; }

 private:
  friend class TargetSession;

  TargetConfig config_;
  Tensor<float> tok_emb_, pos_emb_;
  std::vector<DecoderBlock> blocks_;
  Tensor<float> lnf_gain_, lnf_bias_;
  Tensor<float> lm_head_;
  bool frozen_ = false;
};

// Incremental decoding state over one sequence. Row computations are
// independent of how many tokens are passed per call.
class TargetSession {
 public:
  explicit TargetSession(const TargetModel& model);

  Index length() const { return length_; }
  Index capacity() const { return model_->config().max_seq_len; }

  // Appends `tokens` and returns outputs for the new positions only.
  TargetOutput extend(std::span<const int> tokens);
  // Forgets positions >= `length`.
  void truncate(Index length);

 private:
  const TargetModel* model_;
  std::vector<LayerCache> caches_;
  Index length_ = 0;
};

TargetOutput target_forward(const TargetModel& model, std::span<const int> tokens);

struct GenerateResult {
  std::vector<int> tokens;  // prompt followed by generated tokens
  Index forward_passes = 0;
  bool truncated = false;  // context was left-truncated at least once
  double elapsed_ms = 0;
};

// Requires a frozen model. One target forward per generated token.
GenerateResult generate_autoregressive(const TargetModel& model, std::span<const int> prompt, Index max_new,
                                       double temperature, Rng& rng);

struct TargetTrainOptions {
  Index steps = 2000;
  Index batch = 4;
  Index seq_len = 256;
  OptimizerOptions optimizer{OptimizerKind::adam, 2e-3, 0.9, 0.99, 1e-8, 1.0};
  Index warmup = 100;
  std::uint64_t seed = 0;
};

struct LossPoint {
  Index step;
  double loss;
};

// Next-token cross-entropy training on random windows of `corpus`; the
// model is frozen on return.
std::vector<LossPoint> train_target(TargetModel& model, std::span<const std::uint8_t> corpus,
                                    const TargetTrainOptions& options,
                                    const std::function<void(const LossPoint&)>& on_step = {});

// Mean next-token cross-entropy of `tokens` under the model (nats).
double evaluate_loss(const TargetModel& model, std::span<const int> tokens);

}  // namespace specdraft
