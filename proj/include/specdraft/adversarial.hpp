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

// Draft-head training: distillation from the frozen target, optionally
// combined with a discriminator that learns to tell draft logits from
// target logits while the head learns to fool it.

#pragma once

#include "specdraft/heads.hpp"
#include "specdraft/ops.hpp"
#include "specdraft/optim.hpp"
#include "specdraft/target.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace specdraft {

// KL(softmax(q) || softmax(d)) per row, averaged over rows.
template <typename S>
Tensor<S> distill_loss(const Tensor<S>& d_logits, const Tensor<S>& q_logits) {
  if (d_logits.rows() != q_logits.rows() || d_logits.cols() != q_logits.cols()) {
    throw ShapeError("distill_loss: shape mismatch " + shape_str(d_logits.shape()) + " vs " +
                     shape_str(q_logits.shape()));
  }
  auto log_q = log_softmax_rows(q_logits);
  auto log_d = log_softmax_rows(d_logits);
  auto p_q = softmax_rows(q_logits);
  return scale(sum(mul(p_q, sub(log_q, log_d))), S(1) / S(d_logits.rows()));
}

inline constexpr double kProbClamp = 1e-7;

namespace detail {

// log of probabilities clamped to [eps, 1 - eps]; counts clamped entries.
template <typename S>
Tensor<S> clamped_log(const Tensor<S>& p, std::size_t* saturated) {
  const S lo = S(kProbClamp), hi = S(1) - S(kProbClamp);
  if (saturated) {
    for (Index i = 0; i < p.numel(); ++i) {
      const S v = p.value().data()[i];
      if (v < lo || v > hi) ++*saturated;
    }
  }
  return log(clamp(p, lo, hi));
}

}  // namespace detail

// L_D = -E[log D_real] - E[log(1 - D_fake)]
template <typename S>
Tensor<S> discriminator_loss(const Tensor<S>& d_real, const Tensor<S>& d_fake, std::size_t* saturated = nullptr) {
  auto real_term = mean(detail::clamped_log(d_real, saturated));
  auto fake_term = mean(detail::clamped_log(add_scalar(scale(d_fake, S(-1)), S(1)), saturated));
  return scale(add(real_term, fake_term), S(-1));
}

template <typename S>
struct GeneratorTerms {
  Tensor<S> adversarial;  // -lambda E[log D_fake]
  Tensor<S> distill;
  Tensor<S> total;
};

template <typename S>
GeneratorTerms<S> generator_terms(const Tensor<S>& d_fake, const Tensor<S>& d_logits, const Tensor<S>& q_logits,
                                  S lambda, std::size_t* saturated = nullptr) {
  GeneratorTerms<S> t;
  t.adversarial = scale(mean(detail::clamped_log(d_fake, saturated)), -lambda);
  t.distill = distill_loss(d_logits, q_logits);
  t.total = add(t.adversarial, t.distill);
  return t;
}

// L_G = -lambda E[log D_fake] + distill_loss(d, q)
template <typename S>
Tensor<S> generator_loss(const Tensor<S>& d_fake, const Tensor<S>& d_logits, const Tensor<S>& q_logits, S lambda,
                         std::size_t* saturated = nullptr) {
  return generator_terms(d_fake, d_logits, q_logits, lambda, saturated).total;
}

struct DiscriminatorConfig {
  int d_model = 128;
  int vocab_size = 256;
  int depth = 1;  // number of FC layers, 1..3
  int width = 256;

  void validate() const;
  bool operator==(const DiscriminatorConfig&) const = default;
};

// Scores whether a row of candidate logits came from the target. Input to
// the FC stack is [hidden_map(hidden) | z(candidate) | z(reference)],
// where z standardizes each row of log-probabilities.
class Discriminator {
 public:
  // The last FC layer starts at zero, so every score starts at exactly 0.5.
  static Discriminator init(const DiscriminatorConfig& config, std::uint64_t seed);

  const DiscriminatorConfig& config() const { return config_; }
  ParamList<float> parameters() const;
  void set_trainable(bool on) const;

  // B x 1 probabilities. An undefined `reference` leaves that slot zero.
  Tensor<float> discriminate(const Tensor<float>& hidden, const Tensor<float>& candidate,
                             const Tensor<float>& reference = {}) const;

  Linear& final_layer() { return fc_.back(); }

 private:
  DiscriminatorConfig config_;
  Linear hidden_map_;
  std::vector<Linear> fc_;
};

struct TrainConfig {
  double lambda = 0.1;
  int g_steps = 1;
  int d_steps = 1;
  double lr_g = 1e-4;
  double lr_d = 1e-4;
  OptimizerKind optimizer = OptimizerKind::adam;
  int max_epochs = 40;
  int steps_per_epoch = 50;
  int batch = 64;
  int nash_window = 5;
  double nash_lo = 0.45;
  double nash_hi = 0.55;
  bool adversarial = true;
  int disc_width = 256;
  // Hidden-state cache: number of corpus windows and their length.
  int cache_windows = 256;
  int cache_window_len = 256;
  std::uint64_t seed = 0;

  void validate() const;
};

// Frozen-target hidden states over random corpus windows; q logits are
// recomputed from these through the target LM head.
struct HiddenCache {
  std::vector<int> tokens;
  RowMatrix<float> hidden;
  Index window_len = 0;

  Index windows() const { return window_len ? static_cast<Index>(tokens.size()) / window_len : 0; }
  static HiddenCache build(const TargetModel& target, std::span<const std::uint8_t> corpus, Index windows,
                           Index window_len, std::uint64_t seed);
};

// One batch of B sampled positions with a chain of t steps.
struct TrainBatch {
  Tensor<float> hidden;                      // B x d at the position before the chain
  std::vector<std::vector<int>> step_tokens;  // t x B consumed tokens
  std::vector<Tensor<float>> q_logits;        // t x (B x vocab), target logits per step
  std::vector<Tensor<float>> aligned_hidden;  // t x (B x d), target hidden that produced q
};

class BatchSampler {
 public:
  BatchSampler(const HiddenCache& cache, const TargetModel& target, int t, std::uint64_t seed);
  TrainBatch next(Index batch);

 private:
  const HiddenCache* cache_;
  const TargetModel* target_;
  int t_;
  Rng rng_;
};

struct EpochStats {
  int epoch = 0;
  double loss_g = 0;
  double loss_d = 0;
  double disc_accuracy = 0;
  double distill = 0;
  double adversarial = 0;
  std::size_t saturated = 0;
};

enum class StopReason { none, nash, max_epochs, divergence };
std::string to_string(StopReason reason);

// Evaluated after each epoch.
StopReason decide_stop(const std::vector<EpochStats>& history, const TrainConfig& config, bool has_discriminator);

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class HeadTrainer {
 public:
  // With config.adversarial false no discriminator exists and lambda is 0.
  HeadTrainer(DraftHead& head, const TargetModel& target, const HiddenCache& cache, const TrainConfig& config);

  EpochStats train_epoch();
  const std::optional<Discriminator>& discriminator() const { return disc_; }
  std::optional<Discriminator>& discriminator() { return disc_; }
  int epochs_done() const { return epoch_; }

  // Loss terms on a fixed batch without updating anything.
  struct Evaluation {
    double distill = 0;
    double loss_d = 0;
    double disc_accuracy = 0;
  };
  Evaluation evaluate(const TrainBatch& batch) const;

  // Single updates on an explicit batch.
  void generator_step(const TrainBatch& batch, EpochStats* stats = nullptr);
  void discriminator_step(const TrainBatch& batch, EpochStats* stats = nullptr);

  BatchSampler& sampler() { return sampler_; }

 private:
  DraftHead* head_;
  const TargetModel* target_;
  TrainConfig config_;
  std::optional<Discriminator> disc_;
  std::unique_ptr<Optimizer<float>> opt_g_, opt_d_;
  BatchSampler sampler_;
  int epoch_ = 0;
};

struct TrainingReport {
  std::vector<EpochStats> epochs;
  StopReason stop = StopReason::none;
  double seconds = 0;
};

void write_report_line(std::ostream& out, const EpochStats& stats, StopReason stop);

TrainingReport train_until_equilibrium(HeadTrainer& trainer, const TrainConfig& config,
                                       const std::function<void(const EpochStats&, StopReason)>& on_epoch = {});

}  // namespace specdraft
