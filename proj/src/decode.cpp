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

#include "specdraft/decode.hpp"

#include "json.hpp"

#include <cassert>
#include <chrono>

namespace specdraft {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

struct RngChooser {
  Rng* rng;
  bool accept(double p) { return rng->uniform() < p; }
  int sample(std::span<const double> probs) { return sample_categorical(probs, rng->uniform()); }
};

}  // namespace

std::vector<double> residual_distribution(const ProbDist& q, const ProbDist& d) {
  if (q.size() != d.size()) throw std::invalid_argument("residual: distributions differ in size");
  std::vector<double> r(q.size());
  double total = 0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    r[i] = std::max(0.0, q[i] - d[i]);
    total += r[i];
  }
  if (!(total > 0)) throw ContractViolation("residual: max(0, q - d) is identically zero after a rejection");
  for (double& v : r) v /= total;
  return r;
}

VerifyOutcome verify_stochastic(std::span<const ProbDist> q, std::span<const ProbDist> d, std::span<const int> tokens,
                                Rng& rng, AcceptanceRule rule) {
  RngChooser chooser{&rng};
  return verify_chain(q, d, tokens, chooser, rule);
}

VerifyOutcome verify_greedy(std::span<const ProbDist> q, std::span<const int> tokens) {
  const std::size_t t = tokens.size();
  if (q.size() != t + 1) throw std::invalid_argument("verify_greedy: expected t+1 target distributions");
  VerifyOutcome out;
  out.draft_len = static_cast<int>(t);
  for (std::size_t i = 0; i < t; ++i) {
    const int best = argmax(q[i]);
    if (tokens[i] == best) {
      out.accepts.push_back(true);
      out.emitted.push_back(best);
      ++out.accepted;
      continue;
    }
    out.accepts.push_back(false);
    out.rejection_index = static_cast<int>(i);
    out.emitted.push_back(best);
    return out;
  }
  out.bonus = true;
  out.emitted.push_back(argmax(q[t]));
  return out;
}

Index DecodeTrace::emitted() const {
  Index n = 0;
  for (const auto& it : iterations) n += static_cast<Index>(it.outcome.emitted.size());
  return n;
}

SpecDecoder::SpecDecoder(const TargetModel& target, const DraftHead& head, std::span<const int> prompt,
                         double temperature, AcceptanceRule rule)
    : target_(&target), head_(&head), temperature_(temperature), rule_(rule), session_(target),
      tokens_(prompt.begin(), prompt.end()) {
  if (!target.frozen()) throw std::logic_error("spec_decode: target model must be frozen");
  if (prompt.empty()) throw std::invalid_argument("spec_decode: prompt is empty");
  if (temperature < 0) throw std::invalid_argument("spec_decode: temperature must be >= 0");
  if (head.config().d_model != target.config().d_model) {
    throw ShapeError("spec_decode: head d_model " + std::to_string(head.config().d_model) + " does not match target " +
                     std::to_string(target.config().d_model));
  }
  hidden_ = RowVector<float>::Zero(target.config().d_model);
  const Index cap = target.config().max_seq_len;
  if (static_cast<Index>(prompt.size()) > cap) {
    throw ContextOverflow("spec_decode: prompt of " + std::to_string(prompt.size()) + " tokens exceeds max_seq_len " +
                          std::to_string(cap));
  }
  if (prompt.size() > 1) {
    auto out = session_.extend(prompt.first(prompt.size() - 1));
    hidden_ = out.hidden.row(out.hidden.rows() - 1);
  }
}

const DecodeIteration* SpecDecoder::step(int t, Rng& rng) {
  const Index cap = target_->config().max_seq_len;
  const Index room = cap - session_.length() - 1;
  if (room < 0) {
    trace_.context_limited = true;
    return nullptr;
  }
  if (t > room) {
    t = static_cast<int>(room);
    trace_.context_limited = true;
  }
  DecodeIteration it;
  const int pending = tokens_.back();

  auto t0 = Clock::now();
  DraftResult draft;
  if (t > 0) {
    draft = head_->draft(std::span<const float>(hidden_.data(), hidden_.size()), pending, t, temperature_, rng);
    trace_.draft_forwards += head_->forwards_per_draft(t);
  }
  it.draft_ms = ms_since(t0);

  t0 = Clock::now();
  std::vector<int> feed;
  feed.reserve(static_cast<std::size_t>(t) + 1);
  feed.push_back(pending);
  feed.insert(feed.end(), draft.tokens.begin(), draft.tokens.end());
  const Index base = session_.length();
  TargetOutput out = session_.extend(feed);
  ++trace_.target_forwards;
  std::vector<ProbDist> q;
  q.reserve(feed.size());
  for (Index r = 0; r < out.logits.rows(); ++r) {
    ProbDist p = softmax_dist(std::span<const float>(out.logits.row(r).data(), out.logits.cols()));
    q.push_back(temperature_ == 0 || temperature_ == 1 ? std::move(p) : tempered(p, temperature_));
  }
  it.outcome = temperature_ == 0 ? verify_greedy(q, draft.tokens) : verify_stochastic(q, draft.dists, draft.tokens, rng, rule_);
  const int k = it.outcome.accepted;
  session_.truncate(base + 1 + k);
  hidden_ = out.hidden.row(k);
  tokens_.insert(tokens_.end(), it.outcome.emitted.begin(), it.outcome.emitted.end());
  it.verify_ms = ms_since(t0);

  trace_.draft_ms += it.draft_ms;
  trace_.verify_ms += it.verify_ms;
  trace_.iterations.push_back(std::move(it));
  return &trace_.iterations.back();
}

DecodeResult spec_decode(const TargetModel& target, const DraftHead& head, std::span<const int> prompt, Index max_new,
                         double temperature, Rng& rng) {
  const auto t0 = Clock::now();
  SpecDecoder decoder(target, head, prompt, temperature);
  const int t = head.config().draft_len;
  Index produced = 0;
  while (produced < max_new) {
    const int chain = static_cast<int>(std::min<Index>(t, max_new - produced - 1));
    const DecodeIteration* it = decoder.step(chain, rng);
    if (!it) break;
    produced += static_cast<Index>(it->outcome.emitted.size());
  }
  DecodeResult result{decoder.tokens(), std::move(decoder.trace())};
  result.trace.total_ms = ms_since(t0);
  return result;
}

DecodeResult vanilla_decode_bench(const TargetModel& target, std::span<const int> prompt, Index max_new,
                                  double temperature, Rng& rng) {
  const auto t0 = Clock::now();
  GenerateResult g = generate_autoregressive(target, prompt, max_new, temperature, rng);
  DecodeResult result;
  result.trace.total_ms = ms_since(t0);
  result.trace.verify_ms = g.elapsed_ms;
  result.trace.target_forwards = g.forward_passes;
  result.trace.context_limited = g.truncated;
  for (std::size_t i = prompt.size(); i < g.tokens.size(); ++i) {
    DecodeIteration it;
    it.outcome.emitted.push_back(g.tokens[i]);
    it.outcome.bonus = true;
    result.trace.iterations.push_back(std::move(it));
  }
  result.tokens = std::move(g.tokens);
  return result;
}

void write_trace_jsonl(std::ostream& out, const DecodeTrace& trace) {
  for (const auto& it : trace.iterations) {
    nlohmann::json j;
    j["draft_len"] = it.outcome.draft_len;
    j["accepted_count"] = it.outcome.accepted;
    j["bonus"] = it.outcome.bonus;
    j["emitted"] = it.outcome.emitted;
    j["rejection_index"] = it.outcome.rejection_index ? nlohmann::json(*it.outcome.rejection_index) : nlohmann::json(nullptr);
    j["accepts"] = it.outcome.accepts;
    j["draft_ms"] = it.draft_ms;
    j["verify_ms"] = it.verify_ms;
    out << j.dump() << "\n";
  }
}

}  // namespace specdraft
