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

#include "specdraft/target.hpp"

#include "specdraft/kernels.hpp"
#include "specdraft/ops.hpp"
#include "specdraft/sampling.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <string>
#include <unordered_map>

namespace specdraft {

void TargetConfig::validate() const {
  if (vocab_size <= 0 || d_model <= 0 || n_layers <= 0 || n_heads <= 0 || max_seq_len <= 0 || ff_mult <= 0) {
    throw std::invalid_argument("target config: all fields must be positive");
  }
  if (d_model % n_heads != 0) {
    throw std::invalid_argument("target config: d_model " + std::to_string(d_model) + " not divisible by n_heads " +
                                std::to_string(n_heads));
  }
  if (vocab_size != 256) throw std::invalid_argument("target config: byte tokenizer requires vocab_size 256");
}

TargetModel TargetModel::init(const TargetConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed, "target.init");
  const Index d = config.d_model;
  const double stddev = 0.02;
  const double out_stddev = 0.02 / std::sqrt(2.0 * config.n_layers);

  auto normal = [&rng](Index r, Index c, double s) {
    RowMatrix<float> m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(rng.normal(0.0, s));
    return Tensor<float>::from(std::move(m), true);
  };

  TargetModel model;
  model.config_ = config;
  model.tok_emb_ = normal(config.vocab_size, d, stddev);
  model.pos_emb_ = normal(config.max_seq_len, d, 0.01);
  for (int l = 0; l < config.n_layers; ++l) {
    model.blocks_.push_back(DecoderBlock::init(d, d * config.ff_mult, stddev, out_stddev, rng));
  }
  model.lnf_gain_ = Tensor<float>::from(RowMatrix<float>::Ones(1, d), true);
  model.lnf_bias_ = Tensor<float>::from(RowMatrix<float>::Zero(1, d), true);
  model.lm_head_ = normal(d, config.vocab_size, stddev);
  return model;
}

ParamList<float> TargetModel::parameters() const {
  ParamList<float> out;
  out.push_back({"tok_emb", tok_emb_});
  out.push_back({"pos_emb", pos_emb_});
  for (std::size_t l = 0; l < blocks_.size(); ++l) blocks_[l].collect("layers." + std::to_string(l), out);
  out.push_back({"final_norm.gain", lnf_gain_});
  out.push_back({"final_norm.bias", lnf_bias_});
  out.push_back({"lm_head", lm_head_});
  return out;
}

void TargetModel::freeze() {
  for (auto& p : parameters()) {
    auto t = p.tensor;
    t.clear_grad();
    t.set_requires_grad(false);
  }
  frozen_ = true;
}

void TargetModel::assign(const ParamList<float>& source) {
  if (frozen_) throw FrozenModelError("target model is frozen; weights cannot be replaced");
  std::unordered_map<std::string, const Tensor<float>*> by_name;
  for (const auto& p : source) by_name[p.name] = &p.tensor;
  for (auto& p : parameters()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw std::invalid_argument("target assign: missing tensor " + p.name);
    const auto& src = it->second->value();
    if (src.rows() != p.tensor.rows() || src.cols() != p.tensor.cols()) {
      throw ShapeError("target assign: shape mismatch for " + p.name);
    }
    auto t = p.tensor;
    t.mutable_value() = src;
  }
}

void TargetModel::zero_lm_head() {
  if (frozen_) throw FrozenModelError("target model is frozen; weights cannot be replaced");
  lm_head_.mutable_value().setZero();
}

TargetModel::TrainForward TargetModel::forward_train(std::span<const int> tokens, Index batch, Index seq_len) const {
  if (seq_len < 1 || seq_len > config_.max_seq_len) {
    throw ContextOverflow("target forward: sequence length " + std::to_string(seq_len) + " outside [1, " +
                          std::to_string(config_.max_seq_len) + "]");
  }
  if (static_cast<Index>(tokens.size()) != batch * seq_len) {
    throw ShapeError("target forward: expected " + std::to_string(batch * seq_len) + " tokens, got " +
                     std::to_string(tokens.size()));
  }
  std::vector<int> positions(tokens.size());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<int>(i % static_cast<std::size_t>(seq_len));
  auto x = add(embedding(tok_emb_, tokens), embedding(pos_emb_, positions));
  for (const auto& block : blocks_) x = block.forward(x, config_.n_heads, seq_len);
  auto hidden = layer_norm(x, lnf_gain_, lnf_bias_);
  auto logits = matmul(hidden, lm_head_);
  return {hidden, logits};
}

TargetSession::TargetSession(const TargetModel& model) : model_(&model) {
  const auto& c = model.config();
  caches_.reserve(static_cast<std::size_t>(c.n_layers));
  for (int l = 0; l < c.n_layers; ++l) caches_.emplace_back(c.max_seq_len, c.d_model);
}

TargetOutput TargetSession::extend(std::span<const int> tokens) {
  const auto& c = model_->config();
  const Index n = static_cast<Index>(tokens.size());
  if (n == 0) throw std::invalid_argument("target extend: no tokens");
  if (length_ + n > c.max_seq_len) {
    throw ContextOverflow("target forward: " + std::to_string(length_ + n) + " positions exceed max_seq_len " +
                          std::to_string(c.max_seq_len));
  }
  RowMatrix<float> x(n, c.d_model);
  for (Index r = 0; r < n; ++r) {
    const int id = tokens[static_cast<std::size_t>(r)];
    if (id < 0 || id >= c.vocab_size) throw DomainError("target forward: token id " + std::to_string(id) + " out of range");
    const float* te = model_->tok_emb_.value().row(id).data();
    const float* pe = model_->pos_emb_.value().row(length_ + r).data();
    for (Index j = 0; j < c.d_model; ++j) x(r, j) = te[j] + pe[j];
  }
  for (std::size_t l = 0; l < model_->blocks_.size(); ++l) {
    block_decode(model_->blocks_[l], c.n_heads, x, length_, caches_[l]);
  }
  TargetOutput out;
  out.hidden = layer_norm_decode(x, model_->lnf_gain_, model_->lnf_bias_);
  out.logits.resize(n, c.vocab_size);
  kernels::linear_rows(out.hidden.data(), n, model_->lm_head_.value(), nullptr, out.logits.data());
  length_ += n;
  return out;
}

void TargetSession::truncate(Index length) {
  if (length < 0 || length > length_) throw std::invalid_argument("target truncate: invalid length");
  length_ = length;
}

TargetOutput target_forward(const TargetModel& model, std::span<const int> tokens) {
  if (tokens.empty()) throw std::invalid_argument("target forward: empty sequence");
  if (static_cast<Index>(tokens.size()) > model.config().max_seq_len) {
    throw ContextOverflow("target forward: sequence of " + std::to_string(tokens.size()) +
                          " tokens exceeds max_seq_len " + std::to_string(model.config().max_seq_len));
  }
  TargetSession session(model);
  return session.extend(tokens);
}

GenerateResult generate_autoregressive(const TargetModel& model, std::span<const int> prompt, Index max_new,
                                       double temperature, Rng& rng) {
  if (!model.frozen()) throw std::logic_error("generate: target model must be frozen");
  if (prompt.empty()) throw std::invalid_argument("generate: prompt is empty");
  GenerateResult result;
  result.tokens.assign(prompt.begin(), prompt.end());
  const auto t0 = std::chrono::steady_clock::now();
  if (max_new <= 0) return result;

  const Index cap = model.config().max_seq_len;
  TargetSession session(model);
  auto window_start = [&](Index keep) { return static_cast<Index>(result.tokens.size()) - keep; };

  // Prefill everything but the newest token, which each step feeds.
  Index keep = static_cast<Index>(result.tokens.size());
  if (keep > cap) {
    keep = cap;
    result.truncated = true;
  }
  if (keep > 1) {
    session.extend(std::span<const int>(result.tokens).subspan(static_cast<std::size_t>(window_start(keep)),
                                                              static_cast<std::size_t>(keep - 1)));
  }
  for (Index step = 0; step < max_new; ++step) {
    if (session.length() + 1 > cap) {
      // Left-truncate: rebuild the cache over the newest cap-1 tokens.
      session.truncate(0);
      const Index w = cap - 1;
      session.extend(std::span<const int>(result.tokens).subspan(static_cast<std::size_t>(window_start(w)),
                                                                static_cast<std::size_t>(w - 1)));
      result.truncated = true;
    }
    const int pending = result.tokens.back();
    auto out = session.extend(std::span<const int>(&pending, 1));
    ++result.forward_passes;
    const ProbDist dist = softmax_dist(std::span<const float>(out.logits.row(0).data(), out.logits.cols()));
    result.tokens.push_back(sample_token(dist, temperature, rng));
  }
  result.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

namespace {

Tensor<float> cross_entropy(const Tensor<float>& logits, std::span<const int> targets) {
  auto logp = log_softmax_rows(logits);
  return scale(sum(pick(logp, targets)), -1.0f / static_cast<float>(targets.size()));
}

}  // namespace

std::vector<LossPoint> train_target(TargetModel& model, std::span<const std::uint8_t> corpus,
                                    const TargetTrainOptions& options,
                                    const std::function<void(const LossPoint&)>& on_step) {
  if (model.frozen()) throw FrozenModelError("train_target: model is frozen");
  if (corpus.empty()) throw std::invalid_argument("train_target: corpus is empty");
  const Index L = options.seq_len;
  if (static_cast<Index>(corpus.size()) < L + 2) throw std::invalid_argument("train_target: corpus shorter than one window");

  Rng rng(options.seed, "target.batches");
  Optimizer<float> opt(options.optimizer, model.parameters());
  std::vector<LossPoint> curve;
  std::vector<int> inputs(static_cast<std::size_t>(options.batch * L));
  std::vector<int> targets(inputs.size());
  const Index max_start = static_cast<Index>(corpus.size()) - L - 1;

  for (Index step = 0; step < options.steps; ++step) {
    for (Index b = 0; b < options.batch; ++b) {
      const Index start = rng.below(max_start + 1);
      for (Index i = 0; i < L; ++i) {
        inputs[static_cast<std::size_t>(b * L + i)] = corpus[static_cast<std::size_t>(start + i)];
        targets[static_cast<std::size_t>(b * L + i)] = corpus[static_cast<std::size_t>(start + i + 1)];
      }
    }
    const double base = options.optimizer.learning_rate;
    double lr = base;
    if (step < options.warmup) {
      lr = base * static_cast<double>(step + 1) / static_cast<double>(options.warmup);
    } else if (options.steps > options.warmup) {
      const double progress = static_cast<double>(step - options.warmup) / static_cast<double>(options.steps - options.warmup);
      lr = base * (0.1 + 0.9 * 0.5 * (1 + std::cos(std::numbers::pi * progress)));
    }
    opt.set_learning_rate(lr);

    Tape<float>::current().reset();
    auto fwd = model.forward_train(inputs, options.batch, L);
    auto loss = cross_entropy(fwd.logits, targets);
    LossPoint point{step, loss.item()};
    if (!std::isfinite(point.loss)) throw std::runtime_error("train_target: loss became non-finite at step " + std::to_string(step));
    backward(loss);
    opt.step();
    curve.push_back(point);
    if (on_step) on_step(point);
  }
  model.freeze();
  return curve;
}

double evaluate_loss(const TargetModel& model, std::span<const int> tokens) {
  const Index cap = model.config().max_seq_len;
  double total = 0;
  Index count = 0;
  for (std::size_t start = 0; start + 1 < tokens.size(); start += static_cast<std::size_t>(cap)) {
    const std::size_t len = std::min<std::size_t>(static_cast<std::size_t>(cap), tokens.size() - start - 1);
    auto out = target_forward(model, tokens.subspan(start, len));
    for (std::size_t i = 0; i < len; ++i) {
      const ProbDist d = softmax_dist(std::span<const float>(out.logits.row(Index(i)).data(), out.logits.cols()));
      total -= std::log(std::max(d.probs[static_cast<std::size_t>(tokens[start + i + 1])], 1e-300));
      ++count;
    }
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

}  // namespace specdraft
