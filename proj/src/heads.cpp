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

#include "specdraft/heads.hpp"

#include "specdraft/kernels.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace specdraft {

std::string to_string(HeadKind kind) { return kind == HeadKind::medusa ? "medusa" : "eagle"; }

HeadKind parse_head_kind(const std::string& name) {
  if (name == "medusa") return HeadKind::medusa;
  if (name == "eagle") return HeadKind::eagle;
  throw std::invalid_argument("unknown head kind '" + name + "' (expected medusa or eagle)");
}

void HeadConfig::validate() const {
  if (K < 1) throw std::invalid_argument("head config: K must be >= 1");
  if (d_model <= 0 || vocab_size <= 0) throw std::invalid_argument("head config: d_model and vocab_size must be positive");
  if (draft_len < 1) throw std::invalid_argument("head config: draft_len must be >= 1");
  if (kind == HeadKind::medusa) {
    if (medusa_heads < 1) throw std::invalid_argument("head config: medusa_heads must be >= 1");
    if (draft_len > medusa_heads) {
      throw std::invalid_argument("head config: draft_len " + std::to_string(draft_len) + " exceeds medusa_heads " +
                                  std::to_string(medusa_heads));
    }
  } else {
    if (n_heads <= 0 || d_model % n_heads != 0) throw std::invalid_argument("head config: d_model not divisible by n_heads");
    if (ff_mult <= 0) throw std::invalid_argument("head config: ff_mult must be positive");
  }
}

HeadConfig head_config_for(const TargetConfig& target, HeadKind kind, int K) {
  HeadConfig c;
  c.kind = kind;
  c.K = K;
  c.d_model = target.d_model;
  c.vocab_size = target.vocab_size;
  c.n_heads = target.n_heads;
  c.ff_mult = target.ff_mult;
  return c;
}

namespace {

void check_width(const HeadConfig& config, std::span<const float> hidden) {
  if (static_cast<int>(hidden.size()) != config.d_model) {
    throw ShapeError("draft: hidden width " + std::to_string(hidden.size()) + " does not match head d_model " +
                     std::to_string(config.d_model));
  }
}

void check_target(const HeadConfig& config, const TargetModel& target) {
  if (target.config().d_model != config.d_model || target.config().vocab_size != config.vocab_size) {
    throw ShapeError("draft head: d_model/vocab of head (" + std::to_string(config.d_model) + "/" +
                     std::to_string(config.vocab_size) + ") does not match target (" +
                     std::to_string(target.config().d_model) + "/" + std::to_string(target.config().vocab_size) + ")");
  }
}

int choose(const ProbDist& raw, const ProbDist& used, double temperature, Rng& rng) {
  if (temperature == 0) return argmax(raw);
  return sample_categorical(used.probs, rng.uniform());
}

RowVector<float> linear_vec(std::span<const float> x, const Linear& layer) {
  RowVector<float> y(layer.out_features());
  kernels::linear_rows(x.data(), 1, layer.weight.value(), layer.bias.defined() ? layer.bias.value().data() : nullptr,
                       y.data());
  return y;
}

}  // namespace

std::unique_ptr<MedusaHead> MedusaHead::zeros(const HeadConfig& config) {
  config.validate();
  if (config.kind != HeadKind::medusa) throw std::invalid_argument("MedusaHead: config kind is not medusa");
  std::unique_ptr<MedusaHead> head(new MedusaHead(config));
  for (int h = 0; h < config.medusa_heads; ++h) {
    Stack s;
    for (int k = 0; k < config.K; ++k) s.blocks.push_back({Linear::zeros(config.d_model, config.d_model, true)});
    s.proj = Linear::zeros(config.d_model, config.vocab_size, true);
    head->stacks_.push_back(std::move(s));
  }
  return head;
}

std::unique_ptr<MedusaHead> MedusaHead::init(const HeadConfig& config, const TargetModel& target) {
  check_target(config, target);
  auto head = zeros(config);
  for (auto& s : head->stacks_) s.proj.weight.mutable_value() = target.lm_head().value();
  return head;
}

ParamList<float> MedusaHead::parameters() const {
  ParamList<float> out;
  for (std::size_t h = 0; h < stacks_.size(); ++h) {
    const std::string prefix = "medusa." + std::to_string(h);
    for (std::size_t k = 0; k < stacks_[h].blocks.size(); ++k) {
      stacks_[h].blocks[k].layer.collect(prefix + ".res." + std::to_string(k), out);
    }
    stacks_[h].proj.collect(prefix + ".proj", out);
  }
  return out;
}

Index MedusaHead::param_count_for(const HeadConfig& c) {
  const Index d = c.d_model, v = c.vocab_size;
  return Index(c.medusa_heads) * (Index(c.K) * (d * d + d) + d * v + v);
}

ProbDist MedusaHead::head_dist(std::span<const float> hidden, int h) const {
  check_width(config_, hidden);
  if (h < 0 || h >= static_cast<int>(stacks_.size())) throw std::out_of_range("medusa: head index out of range");
  const Stack& s = stacks_[static_cast<std::size_t>(h)];
  RowVector<float> x = Eigen::Map<const RowVector<float>>(hidden.data(), static_cast<Index>(hidden.size()));
  for (const auto& block : s.blocks) {
    RowVector<float> f = linear_vec(std::span<const float>(x.data(), x.size()), block.layer);
    kernels::silu_inplace(f.data(), f.size());
    x += f;
  }
  RowVector<float> logits = linear_vec(std::span<const float>(x.data(), x.size()), s.proj);
  return softmax_dist(std::span<const float>(logits.data(), logits.size()));
}

DraftResult MedusaHead::draft(std::span<const float> hidden, int, int t, double temperature, Rng& rng,
                              std::span<const int> forced) const {
  if (t < 1) throw std::invalid_argument("draft: chain length must be >= 1");
  if (t > config_.medusa_heads) {
    throw std::invalid_argument("medusa draft: chain length " + std::to_string(t) + " exceeds " +
                                std::to_string(config_.medusa_heads) + " heads");
  }
  DraftResult out;
  for (int j = 0; j < t; ++j) {
    const ProbDist raw = head_dist(hidden, j);
    ProbDist used = tempered(raw, temperature);
    int tok = choose(raw, used, temperature, rng);
    if (static_cast<std::size_t>(j) < forced.size()) tok = forced[static_cast<std::size_t>(j)];
    out.tokens.push_back(tok);
    out.dists.push_back(std::move(used));
  }
  return out;
}

std::vector<Tensor<float>> MedusaHead::train_logits(const Tensor<float>& hidden, const std::vector<std::vector<int>>&,
                                                    int t) const {
  if (t > config_.medusa_heads) throw std::invalid_argument("medusa: chain length exceeds head count");
  std::vector<Tensor<float>> out;
  for (int j = 0; j < t; ++j) {
    const Stack& s = stacks_[static_cast<std::size_t>(j)];
    Tensor<float> x = hidden;
    for (const auto& block : s.blocks) x = block(x);
    out.push_back(s.proj(x));
  }
  return out;
}

std::unique_ptr<EagleHead> EagleHead::init(const HeadConfig& config, const TargetModel& target, std::uint64_t seed) {
  config.validate();
  if (config.kind != HeadKind::eagle) throw std::invalid_argument("EagleHead: config kind is not eagle");
  check_target(config, target);
  if (!target.frozen()) throw std::logic_error("EagleHead: target must be frozen before attaching a head");
  std::unique_ptr<EagleHead> head(new EagleHead(config));
  Rng rng(seed, "eagle.init");
  const Index d = config.d_model;
  head->embedding_ = Tensor<float>::from(target.token_embedding().value(), true);
  head->fusion_ = Linear::init(2 * d, d, false, 0.02, rng);
  // Start the hidden half of the fusion as identity.
  head->fusion_.weight.mutable_value().bottomRows(d).setIdentity();
  const double out_std = 0.02 / std::sqrt(2.0 * config.K);
  for (int k = 0; k < config.K; ++k) {
    head->layers_.push_back(DecoderBlock::init(d, d * config.ff_mult, 0.02, out_std, rng));
  }
  head->lm_head_ = target.lm_head();
  return head;
}

ParamList<float> EagleHead::parameters() const {
  ParamList<float> out;
  out.push_back({"eagle.embedding", embedding_});
  fusion_.collect("eagle.fusion", out);
  for (std::size_t k = 0; k < layers_.size(); ++k) layers_[k].collect("eagle.layers." + std::to_string(k), out);
  return out;
}

Index EagleHead::param_count_for(const HeadConfig& c) {
  const Index d = c.d_model;
  return Index(c.vocab_size) * d + 2 * d * d + Index(c.K) * DecoderBlock::param_count(d, d * c.ff_mult);
}

DraftResult EagleHead::draft(std::span<const float> hidden, int pending, int t, double temperature, Rng& rng,
                             std::span<const int> forced) const {
  if (t < 1) throw std::invalid_argument("draft: chain length must be >= 1");
  check_width(config_, hidden);
  if (pending < 0 || pending >= config_.vocab_size) throw DomainError("eagle draft: token id out of range");
  const Index d = config_.d_model;
  std::vector<LayerCache> caches;
  for (std::size_t k = 0; k < layers_.size(); ++k) caches.emplace_back(t, d);

  DraftResult out;
  RowVector<float> feature = Eigen::Map<const RowVector<float>>(hidden.data(), d);
  int token = pending;
  RowVector<float> fused_in(2 * d);
  for (int j = 0; j < t; ++j) {
    fused_in.head(d) = embedding_.value().row(token);
    fused_in.tail(d) = feature;
    RowMatrix<float> x(1, d);
    kernels::linear_rows(fused_in.data(), 1, fusion_.weight.value(), nullptr, x.data());
    for (std::size_t k = 0; k < layers_.size(); ++k) block_decode(layers_[k], config_.n_heads, x, j, caches[k]);
    feature = x.row(0);
    RowVector<float> logits(config_.vocab_size);
    kernels::linear_rows(feature.data(), 1, lm_head_.value(), nullptr, logits.data());
    const ProbDist raw = softmax_dist(std::span<const float>(logits.data(), logits.size()));
    ProbDist used = tempered(raw, temperature);
    token = choose(raw, used, temperature, rng);
    if (static_cast<std::size_t>(j) < forced.size()) token = forced[static_cast<std::size_t>(j)];
    out.tokens.push_back(token);
    out.dists.push_back(std::move(used));
    out.features.push_back(feature);
  }
  return out;
}

std::vector<Tensor<float>> EagleHead::train_logits(const Tensor<float>& hidden,
                                                   const std::vector<std::vector<int>>& step_tokens, int t) const {
  if (static_cast<int>(step_tokens.size()) < t) throw std::invalid_argument("eagle: missing step tokens");
  const Index B = hidden.rows();
  std::vector<Tensor<float>> inputs, out;
  Tensor<float> feature = hidden;
  for (int j = 0; j < t; ++j) {
    const auto& toks = step_tokens[static_cast<std::size_t>(j)];
    if (static_cast<Index>(toks.size()) != B) throw ShapeError("eagle: step token count does not match batch");
    inputs.push_back(fusion_(concat_cols(embedding(embedding_, toks), feature)));
    // The attention prefix is recomputed at every step: rows are regrouped
    // sample-major so each sample's chain forms one causal group.
    const Index L = j + 1;
    std::vector<Index> order(static_cast<std::size_t>(B * L));
    for (Index b = 0; b < B; ++b) {
      for (Index i = 0; i < L; ++i) order[static_cast<std::size_t>(b * L + i)] = i * B + b;
    }
    Tensor<float> x = gather_rows(concat_rows(inputs), order);
    for (const auto& layer : layers_) x = layer.forward(x, config_.n_heads, L);
    std::vector<Index> last(static_cast<std::size_t>(B));
    for (Index b = 0; b < B; ++b) last[static_cast<std::size_t>(b)] = b * L + L - 1;
    feature = gather_rows(x, last);
    out.push_back(matmul(feature, lm_head_));
  }
  return out;
}

std::unique_ptr<DraftHead> make_head(const HeadConfig& config, const TargetModel& target, std::uint64_t seed) {
  if (config.kind == HeadKind::medusa) return MedusaHead::init(config, target);
  return EagleHead::init(config, target, seed);
}

void assign_parameters(DraftHead& head, const ParamList<float>& source) {
  std::unordered_map<std::string, const Tensor<float>*> by_name;
  for (const auto& p : source) by_name[p.name] = &p.tensor;
  for (auto& p : head.parameters()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw std::invalid_argument("head assign: missing tensor " + p.name);
    const auto& src = it->second->value();
    if (src.rows() != p.tensor.rows() || src.cols() != p.tensor.cols()) {
      throw ShapeError("head assign: shape mismatch for " + p.name);
    }
    auto t = p.tensor;
    t.mutable_value() = src;
  }
}

}  // namespace specdraft
