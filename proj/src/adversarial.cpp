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

#include "specdraft/adversarial.hpp"

#include "json.hpp"

#include <chrono>
#include <sstream>

namespace specdraft {

void DiscriminatorConfig::validate() const {
  if (d_model <= 0 || vocab_size <= 0 || width <= 0) throw std::invalid_argument("discriminator: sizes must be positive");
  if (depth < 1 || depth > 3) {
    throw std::invalid_argument("discriminator: depth " + std::to_string(depth) + " outside [1, 3]");
  }
}

namespace {

// Row-wise zero-mean, unit-variance log-probabilities.
Tensor<float> standardized_log_probs(const Tensor<float>& logits) {
  const auto ones = Tensor<float>::from(RowMatrix<float>::Ones(1, logits.cols()));
  const auto zeros = Tensor<float>::zeros(1, logits.cols());
  return layer_norm(log_softmax_rows(logits), ones, zeros);
}

}  // namespace

Discriminator Discriminator::init(const DiscriminatorConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed, "discriminator.init");
  Discriminator d;
  d.config_ = config;
  const Index v = config.vocab_size;
  d.hidden_map_ = Linear::init(config.d_model, v, true, 1.0 / std::sqrt(double(config.d_model)), rng);
  Index in = 3 * v;
  for (int l = 0; l + 1 < config.depth; ++l) {
    d.fc_.push_back(Linear::init(in, config.width, true, 1.0 / std::sqrt(double(in)), rng));
    in = config.width;
  }
  d.fc_.push_back(Linear::zeros(in, 1, true));
  return d;
}

ParamList<float> Discriminator::parameters() const {
  ParamList<float> out;
  hidden_map_.collect("disc.hidden_map", out);
  for (std::size_t l = 0; l < fc_.size(); ++l) fc_[l].collect("disc.fc." + std::to_string(l), out);
  return out;
}

void Discriminator::set_trainable(bool on) const {
  for (auto& p : parameters()) {
    auto t = p.tensor;
    t.set_requires_grad(on);
  }
}

Tensor<float> Discriminator::discriminate(const Tensor<float>& hidden, const Tensor<float>& candidate,
                                          const Tensor<float>& reference) const {
  const Index v = config_.vocab_size;
  if (hidden.cols() != config_.d_model || candidate.cols() != v || hidden.rows() != candidate.rows()) {
    throw ShapeError("discriminate: expected hidden [B x " + std::to_string(config_.d_model) + "] and logits [B x " +
                     std::to_string(v) + "], got " + shape_str(hidden.shape()) + " and " + shape_str(candidate.shape()));
  }
  Tensor<float> ref_slot;
  if (reference.defined()) {
    if (reference.rows() != candidate.rows() || reference.cols() != v) detail::shape_mismatch("discriminate", candidate, reference);
    ref_slot = standardized_log_probs(reference);
  } else {
    ref_slot = Tensor<float>::zeros(candidate.rows(), v);
  }
  auto x = concat_cols(concat_cols(hidden_map_(hidden), standardized_log_probs(candidate)), ref_slot);
  for (std::size_t l = 0; l < fc_.size(); ++l) {
    x = fc_[l](x);
    if (l + 1 < fc_.size()) x = silu(x);
  }
  return sigmoid(x);
}

void TrainConfig::validate() const {
  if (lambda < 0) throw std::invalid_argument("train config: lambda must be >= 0");
  if (g_steps < 0 || d_steps < 0) throw std::invalid_argument("train config: g_steps and d_steps must be >= 0");
  if (!(lr_g > 0) || !(lr_d > 0)) throw std::invalid_argument("train config: learning rates must be > 0");
  if (max_epochs < 1) throw std::invalid_argument("train config: max_epochs must be >= 1");
  if (steps_per_epoch < 1 || batch < 1) throw std::invalid_argument("train config: steps_per_epoch and batch must be >= 1");
  if (nash_window < 1) throw std::invalid_argument("train config: nash_window must be >= 1");
  if (!(nash_lo < nash_hi)) throw std::invalid_argument("train config: nash band is empty");
  if (cache_windows < 1 || cache_window_len < 2) throw std::invalid_argument("train config: invalid cache size");
}

HiddenCache HiddenCache::build(const TargetModel& target, std::span<const std::uint8_t> corpus, Index windows,
                               Index window_len, std::uint64_t seed) {
  if (!target.frozen()) throw std::logic_error("hidden cache: target must be frozen");
  if (window_len > target.config().max_seq_len) throw ContextOverflow("hidden cache: window exceeds max_seq_len");
  if (static_cast<Index>(corpus.size()) < window_len) throw std::invalid_argument("hidden cache: corpus shorter than one window");
  Rng rng(seed, "cache.windows");
  HiddenCache cache;
  cache.window_len = window_len;
  cache.tokens.resize(static_cast<std::size_t>(windows * window_len));
  for (Index w = 0; w < windows; ++w) {
    const Index start = rng.below(static_cast<Index>(corpus.size()) - window_len + 1);
    for (Index i = 0; i < window_len; ++i) {
      cache.tokens[static_cast<std::size_t>(w * window_len + i)] = corpus[static_cast<std::size_t>(start + i)];
    }
  }
  cache.hidden.resize(windows * window_len, target.config().d_model);
  NoGradGuard<float> guard;
  const Index chunk = 8;
  for (Index w = 0; w < windows; w += chunk) {
    const Index n = std::min(chunk, windows - w);
    std::span<const int> toks(cache.tokens.data() + w * window_len, static_cast<std::size_t>(n * window_len));
    auto out = target.forward_train(toks, n, window_len);
    cache.hidden.middleRows(w * window_len, n * window_len) = out.hidden.value();
  }
  return cache;
}

BatchSampler::BatchSampler(const HiddenCache& cache, const TargetModel& target, int t, std::uint64_t seed)
    : cache_(&cache), target_(&target), t_(t), rng_(seed, "train.batches") {
  if (cache.window_len <= t) throw std::invalid_argument("batch sampler: cache windows shorter than the chain");
}

TrainBatch BatchSampler::next(Index batch) {
  const Index L = cache_->window_len;
  const Index d = cache_->hidden.cols();
  std::vector<Index> base(static_cast<std::size_t>(batch));
  for (auto& b : base) b = rng_.below(cache_->windows()) * L + rng_.below(L - t_);

  TrainBatch out;
  RowMatrix<float> h(batch, d);
  for (Index b = 0; b < batch; ++b) h.row(b) = cache_->hidden.row(base[static_cast<std::size_t>(b)]);
  out.hidden = Tensor<float>::from(std::move(h));
  const RowMatrix<float>& w_out = target_->lm_head().value();
  for (int j = 0; j < t_; ++j) {
    std::vector<int> toks(static_cast<std::size_t>(batch));
    RowMatrix<float> aligned(batch, d);
    for (Index b = 0; b < batch; ++b) {
      const Index pos = base[static_cast<std::size_t>(b)] + 1 + j;
      toks[static_cast<std::size_t>(b)] = cache_->tokens[static_cast<std::size_t>(pos)];
      aligned.row(b) = cache_->hidden.row(pos);
    }
    RowMatrix<float> q = aligned * w_out;
    out.step_tokens.push_back(std::move(toks));
    out.q_logits.push_back(Tensor<float>::from(std::move(q)));
    out.aligned_hidden.push_back(Tensor<float>::from(std::move(aligned)));
  }
  return out;
}

std::string to_string(StopReason reason) {
  switch (reason) {
    case StopReason::nash: return "nash";
    case StopReason::max_epochs: return "max_epochs";
    case StopReason::divergence: return "divergence";
    default: return "none";
  }
}

StopReason decide_stop(const std::vector<EpochStats>& history, const TrainConfig& config, bool has_discriminator) {
  const std::size_t n = history.size();
  if (n >= 4) {
    const double a = history[n - 4].loss_g, b = history[n - 3].loss_g, c = history[n - 2].loss_g, e = history[n - 1].loss_g;
    if (a < b && b < c && c < e && e >= 10 * a) return StopReason::divergence;
  }
  const std::size_t w = static_cast<std::size_t>(config.nash_window);
  if (has_discriminator && n >= w) {
    double acc = 0;
    for (std::size_t i = n - w; i < n; ++i) acc += history[i].disc_accuracy;
    acc /= static_cast<double>(w);
    if (acc >= config.nash_lo && acc <= config.nash_hi) return StopReason::nash;
  }
  if (static_cast<int>(n) >= config.max_epochs) return StopReason::max_epochs;
  return StopReason::none;
}

HeadTrainer::HeadTrainer(DraftHead& head, const TargetModel& target, const HiddenCache& cache, const TrainConfig& config)
    : head_(&head),
      target_(&target),
      config_(config),
      sampler_(cache, target, head.config().draft_len, config.seed) {
  config_.validate();
  if (!target.frozen()) throw std::logic_error("head training: target must be frozen");
  if (!config_.adversarial) config_.lambda = 0;
  OptimizerOptions g{config_.optimizer, config_.lr_g, 0.9, 0.999, 1e-8, 1.0};
  opt_g_ = std::make_unique<Optimizer<float>>(g, head.parameters());
  if (config_.adversarial) {
    DiscriminatorConfig dc;
    dc.d_model = head.config().d_model;
    dc.vocab_size = head.config().vocab_size;
    dc.depth = std::min(head.config().K, 3);
    dc.width = config_.disc_width;
    disc_ = Discriminator::init(dc, config_.seed);
    OptimizerOptions d{config_.optimizer, config_.lr_d, 0.9, 0.999, 1e-8, 1.0};
    opt_d_ = std::make_unique<Optimizer<float>>(d, disc_->parameters());
  }
}

namespace {

void check_finite(double v, const char* what, int epoch, Index step) {
  if (!std::isfinite(v)) {
    std::ostringstream msg;
    msg << what << " became non-finite at epoch " << epoch << ", step " << step;
    throw TrainingError(msg.str());
  }
}

}  // namespace

void HeadTrainer::generator_step(const TrainBatch& batch, EpochStats* stats) {
  const int t = head_->config().draft_len;
  Tape<float>::current().reset();
  if (disc_) disc_->set_trainable(false);
  auto logits = head_->train_logits(batch.hidden, batch.step_tokens, t);
  Tensor<float> total;
  double distill = 0, adversarial = 0;
  std::size_t saturated = 0;
  for (int j = 0; j < t; ++j) {
    Tensor<float> term;
    if (disc_) {
      auto fake = disc_->discriminate(batch.aligned_hidden[static_cast<std::size_t>(j)], logits[static_cast<std::size_t>(j)]);
      auto terms = generator_terms(fake, logits[static_cast<std::size_t>(j)], batch.q_logits[static_cast<std::size_t>(j)],
                                   static_cast<float>(config_.lambda), &saturated);
      distill += terms.distill.item();
      adversarial += terms.adversarial.item();
      term = terms.total;
    } else {
      term = distill_loss(logits[static_cast<std::size_t>(j)], batch.q_logits[static_cast<std::size_t>(j)]);
      distill += term.item();
    }
    total = j == 0 ? term : add(total, term);
  }
  check_finite(total.item(), "generator loss", epoch_, opt_g_->steps());
  backward(total);
  opt_g_->step();
  if (disc_) disc_->set_trainable(true);
  if (stats) {
    stats->loss_g += total.item();
    stats->distill += distill;
    stats->adversarial += adversarial;
    stats->saturated += saturated;
  }
}

void HeadTrainer::discriminator_step(const TrainBatch& batch, EpochStats* stats) {
  if (!disc_) throw std::logic_error("discriminator step without a discriminator");
  const int t = head_->config().draft_len;
  Tape<float>::current().reset();
  std::vector<Tensor<float>> logits;
  {
    NoGradGuard<float> guard;
    logits = head_->train_logits(batch.hidden, batch.step_tokens, t);
  }
  Tensor<float> total;
  std::size_t saturated = 0, correct = 0, seen = 0;
  for (int j = 0; j < t; ++j) {
    const auto& h = batch.aligned_hidden[static_cast<std::size_t>(j)];
    auto real = disc_->discriminate(h, batch.q_logits[static_cast<std::size_t>(j)]);
    auto fake = disc_->discriminate(h, logits[static_cast<std::size_t>(j)]);
    for (Index r = 0; r < real.rows(); ++r) {
      correct += real.value()(r, 0) > 0.5f;
      correct += fake.value()(r, 0) < 0.5f;
    }
    seen += 2 * static_cast<std::size_t>(real.rows());
    auto term = discriminator_loss(real, fake, &saturated);
    total = j == 0 ? term : add(total, term);
  }
  check_finite(total.item(), "discriminator loss", epoch_, opt_d_->steps());
  backward(total);
  opt_d_->step();
  if (stats) {
    stats->loss_d += total.item();
    stats->disc_accuracy += static_cast<double>(correct) / static_cast<double>(seen);
    stats->saturated += saturated;
  }
}

HeadTrainer::Evaluation HeadTrainer::evaluate(const TrainBatch& batch) const {
  NoGradGuard<float> guard;
  const int t = head_->config().draft_len;
  auto logits = head_->train_logits(batch.hidden, batch.step_tokens, t);
  Evaluation e;
  std::size_t correct = 0, seen = 0;
  for (int j = 0; j < t; ++j) {
    const auto& q = batch.q_logits[static_cast<std::size_t>(j)];
    e.distill += distill_loss(logits[static_cast<std::size_t>(j)], q).item();
    if (disc_) {
      const auto& h = batch.aligned_hidden[static_cast<std::size_t>(j)];
      auto real = disc_->discriminate(h, q);
      auto fake = disc_->discriminate(h, logits[static_cast<std::size_t>(j)]);
      for (Index r = 0; r < real.rows(); ++r) {
        correct += real.value()(r, 0) > 0.5f;
        correct += fake.value()(r, 0) < 0.5f;
      }
      seen += 2 * static_cast<std::size_t>(real.rows());
      e.loss_d += discriminator_loss(real, fake).item();
    }
  }
  if (seen) e.disc_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
  return e;
}

EpochStats HeadTrainer::train_epoch() {
  EpochStats stats;
  stats.epoch = ++epoch_;
  int g_count = 0, d_count = 0, acc_count = 0;
  for (int s = 0; s < config_.steps_per_epoch; ++s) {
    const TrainBatch batch = sampler_.next(config_.batch);
    for (int g = 0; g < config_.g_steps; ++g, ++g_count) generator_step(batch, &stats);
    if (!disc_) continue;
    if (config_.d_steps == 0) {
      stats.disc_accuracy += evaluate(batch).disc_accuracy;
      ++acc_count;
    }
    for (int d = 0; d < config_.d_steps; ++d, ++d_count) {
      discriminator_step(batch, &stats);
      ++acc_count;
    }
  }
  if (g_count) {
    stats.loss_g /= g_count;
    stats.distill /= g_count;
    stats.adversarial /= g_count;
  }
  if (d_count) stats.loss_d /= d_count;
  if (acc_count) stats.disc_accuracy /= acc_count;
  return stats;
}

void write_report_line(std::ostream& out, const EpochStats& s, StopReason stop) {
  nlohmann::json j;
  j["epoch"] = s.epoch;
  j["L_G"] = s.loss_g;
  j["L_D"] = s.loss_d;
  j["disc_accuracy"] = s.disc_accuracy;
  j["distill"] = s.distill;
  j["adversarial"] = s.adversarial;
  j["saturated"] = s.saturated;
  j["stop"] = stop == StopReason::none ? nlohmann::json(nullptr) : nlohmann::json(to_string(stop));
  out << j.dump() << "\n";
}

TrainingReport train_until_equilibrium(HeadTrainer& trainer, const TrainConfig& config,
                                       const std::function<void(const EpochStats&, StopReason)>& on_epoch) {
  TrainingReport report;
  const auto t0 = std::chrono::steady_clock::now();
  const bool has_disc = trainer.discriminator().has_value();
  while (report.stop == StopReason::none) {
    report.epochs.push_back(trainer.train_epoch());
    report.stop = decide_stop(report.epochs, config, has_disc);
    if (on_epoch) on_epoch(report.epochs.back(), report.stop);
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace specdraft
