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

// Draft heads that read the target's final hidden state and propose a chain
// of upcoming tokens.
//
// Position convention shared with the decoder: the target has consumed
// x_1..x_{n-1}, `hidden` is its final hidden state at x_{n-1}, and `pending`
// is x_n, known but not yet consumed. The heads draft x_{n+1}..x_{n+t}.

#pragma once

#include "specdraft/block.hpp"
#include "specdraft/ops.hpp"
#include "specdraft/sampling.hpp"
#include "specdraft/target.hpp"

#include <memory>
#include <span>
#include <string>
#include <vector>

namespace specdraft {

enum class HeadKind { medusa, eagle };

std::string to_string(HeadKind kind);
HeadKind parse_head_kind(const std::string& name);

struct HeadConfig {
  HeadKind kind = HeadKind::medusa;
  int K = 1;
  int medusa_heads = 3;
  int d_model = 128;
  int vocab_size = 256;
  int draft_len = 3;
  // EAGLE decoder layers mirror the target's layer shape.
  int n_heads = 4;
  int ff_mult = 4;

  void validate() const;
  bool operator==(const HeadConfig&) const = default;
};

HeadConfig head_config_for(const TargetConfig& target, HeadKind kind, int K);

struct DraftResult {
  std::vector<int> tokens;
  std::vector<ProbDist> dists;  // the distributions the tokens were drawn from
  std::vector<RowVector<float>> features;  // eagle only
};

class DraftHead {
 public:
  virtual ~DraftHead() = default;

  const HeadConfig& config() const { return config_; }

  // Trainable tensors only.
  virtual ParamList<float> parameters() const = 0;
  Index param_count() const { return count_parameters(parameters(), true); }

  // Drafts `t` tokens. A non-empty `forced` overrides the sampled token at
  // each listed step (its distribution is still reported).
  virtual DraftResult draft(std::span<const float> hidden, int pending, int t, double temperature, Rng& rng,
                            std::span<const int> forced = {}) const = 0;

  // Draft forwards spent on a chain of length t.
  virtual Index forwards_per_draft(int t) const = 0;

  // Differentiable logits for a batch of B positions. `hidden` is B x d;
  // `step_tokens[j]` holds the B tokens consumed at chain step j (only EAGLE
  // reads them; step 0 is the pending token). Returns t tensors of B x vocab.
  virtual std::vector<Tensor<float>> train_logits(const Tensor<float>& hidden,
                                                  const std::vector<std::vector<int>>& step_tokens, int t) const = 0;

 protected:
  explicit DraftHead(HeadConfig config) : config_(config) {}
  HeadConfig config_;
};

// x <- x + SiLU(x W + b)
struct ResBlock {
  Linear layer;
  Tensor<float> operator()(const Tensor<float>& x) const { return add(x, silu(layer(x))); }
};

class MedusaHead : public DraftHead {
 public:
  // ResBlocks start at zero (identity); projections copy the target LM head.
  static std::unique_ptr<MedusaHead> init(const HeadConfig& config, const TargetModel& target);
  // Everything zero: every head emits the uniform distribution.
  static std::unique_ptr<MedusaHead> zeros(const HeadConfig& config);

  ParamList<float> parameters() const override;
  DraftResult draft(std::span<const float> hidden, int pending, int t, double temperature, Rng& rng,
                    std::span<const int> forced = {}) const override;
  Index forwards_per_draft(int) const override { return 1; }
  std::vector<Tensor<float>> train_logits(const Tensor<float>& hidden, const std::vector<std::vector<int>>& step_tokens,
                                          int t) const override;

  // Distribution of head h (0-based) for one hidden state.
  ProbDist head_dist(std::span<const float> hidden, int h) const;

  struct Stack {
    std::vector<ResBlock> blocks;
    Linear proj;
  };
  std::vector<Stack>& stacks() { return stacks_; }
  const std::vector<Stack>& stacks() const { return stacks_; }

  static Index param_count_for(const HeadConfig& config);

 private:
  explicit MedusaHead(HeadConfig config) : DraftHead(config) {}
  std::vector<Stack> stacks_;
};

class EagleHead : public DraftHead {
 public:
  // Requires a frozen target; the LM head is shared, not copied.
  static std::unique_ptr<EagleHead> init(const HeadConfig& config, const TargetModel& target, std::uint64_t seed);

  ParamList<float> parameters() const override;
  DraftResult draft(std::span<const float> hidden, int pending, int t, double temperature, Rng& rng,
                    std::span<const int> forced = {}) const override;
  Index forwards_per_draft(int t) const override { return t; }
  std::vector<Tensor<float>> train_logits(const Tensor<float>& hidden, const std::vector<std::vector<int>>& step_tokens,
                                          int t) const override;

  const Tensor<float>& lm_head() const { return lm_head_; }

  static Index param_count_for(const HeadConfig& config);

 private:
  explicit EagleHead(HeadConfig config) : DraftHead(config) {}
  Tensor<float> embedding_;
  Linear fusion_;
  std::vector<DecoderBlock> layers_;
  Tensor<float> lm_head_;
};

// Fresh head of the configured kind. `seed` only matters for EAGLE.
std::unique_ptr<DraftHead> make_head(const HeadConfig& config, const TargetModel& target, std::uint64_t seed);

// Copies tensor values into `head` by name and shape.
void assign_parameters(DraftHead& head, const ParamList<float>& source);

}  // namespace specdraft
