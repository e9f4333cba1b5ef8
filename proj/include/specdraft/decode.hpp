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

// Draft-then-verify decoding.

#pragma once

#include "specdraft/heads.hpp"
#include "specdraft/sampling.hpp"
#include "specdraft/target.hpp"

#include <algorithm>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace specdraft {

struct VerifyOutcome {
  int draft_len = 0;
  int accepted = 0;
  std::vector<int> emitted;  // accepted drafts, then one correction or bonus token
  std::optional<int> rejection_index;  // 0-based chain position of the first rejection
  bool bonus = false;
  std::vector<bool> accepts;  // one entry per evaluated position
};

struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

// Probability of accepting a drafted token given q(x) and d(x).
using AcceptanceRule = double (*)(double q, double d);

inline double standard_acceptance(double q, double d) { return std::min(1.0, q / d); }

// norm(max(0, q - d)).
std::vector<double> residual_distribution(const ProbDist& q, const ProbDist& d);

// Core verification loop. `chooser` supplies randomness through
//   bool accept(double probability)
//   int sample(std::span<const double> probs)
// q has t+1 entries, d and tokens have t.
template <typename Chooser>
VerifyOutcome verify_chain(std::span<const ProbDist> q, std::span<const ProbDist> d, std::span<const int> tokens,
                           Chooser& chooser, AcceptanceRule rule = standard_acceptance) {
  const std::size_t t = tokens.size();
  if (d.size() != t || q.size() != t + 1) {
    throw std::invalid_argument("verify: expected t+1 target and t draft distributions for t=" + std::to_string(t));
  }
  VerifyOutcome out;
  out.draft_len = static_cast<int>(t);
  for (std::size_t i = 0; i < t; ++i) {
    const auto x = static_cast<std::size_t>(tokens[i]);
    if (x >= d[i].size() || x >= q[i].size()) throw ContractViolation("verify: drafted token id out of range");
    const double dx = d[i][x];
    if (!(dx > 0)) {
      throw ContractViolation("verify: drafted token " + std::to_string(x) + " has zero draft probability at position " +
                              std::to_string(i));
    }
    if (chooser.accept(rule(q[i][x], dx))) {
      out.accepts.push_back(true);
      out.emitted.push_back(tokens[i]);
      ++out.accepted;
      continue;
    }
    out.accepts.push_back(false);
    out.rejection_index = static_cast<int>(i);
    const std::vector<double> r = residual_distribution(q[i], d[i]);
    out.emitted.push_back(chooser.sample(r));
    return out;
  }
  out.bonus = true;
  out.emitted.push_back(chooser.sample(q[t].probs));
  return out;
}

// Stochastic acceptance; one uniform per evaluated position in order, and
// one more for the correction or bonus token.
VerifyOutcome verify_stochastic(std::span<const ProbDist> q, std::span<const ProbDist> d, std::span<const int> tokens,
                                Rng& rng, AcceptanceRule rule = standard_acceptance);

// Accept while the draft equals argmax(q); emit argmax of the next q.
VerifyOutcome verify_greedy(std::span<const ProbDist> q, std::span<const int> tokens);

struct DecodeIteration {
  VerifyOutcome outcome;
  double draft_ms = 0;
  double verify_ms = 0;
};

struct DecodeTrace {
  std::vector<DecodeIteration> iterations;
  Index target_forwards = 0;
  Index draft_forwards = 0;
  double draft_ms = 0;
  double verify_ms = 0;
  double total_ms = 0;
  bool context_limited = false;

  Index emitted() const;
};

struct DecodeResult {
  std::vector<int> tokens;  // prompt followed by generated tokens
  DecodeTrace trace;
};

// Incremental speculative decoder over one sequence.
class SpecDecoder {
 public:
  SpecDecoder(const TargetModel& target, const DraftHead& head, std::span<const int> prompt, double temperature,
              AcceptanceRule rule = standard_acceptance);

  // One draft-verify iteration with a chain of up to `t` tokens (0 means a
  // plain target step). Returns nullptr when the context is full.
  const DecodeIteration* step(int t, Rng& rng);

  const std::vector<int>& tokens() const { return tokens_; }
  const DecodeTrace& trace() const { return trace_; }
  DecodeTrace& trace() { return trace_; }

 private:
  const TargetModel* target_;
  const DraftHead* head_;
  double temperature_;
  AcceptanceRule rule_;
  TargetSession session_;
  std::vector<int> tokens_;
  RowVector<float> hidden_;
  DecodeTrace trace_;
};

// Drafts with the head's configured chain length and stops after exactly
// `max_new` tokens (the last chain is shortened to fit) or at the context limit.
DecodeResult spec_decode(const TargetModel& target, const DraftHead& head, std::span<const int> prompt, Index max_new,
                         double temperature, Rng& rng);

// Autoregressive decoding with the same timing fields as spec_decode.
DecodeResult vanilla_decode_bench(const TargetModel& target, std::span<const int> prompt, Index max_new,
                                  double temperature, Rng& rng);

// One JSON object per iteration.
void write_trace_jsonl(std::ostream& out, const DecodeTrace& trace);

}  // namespace specdraft
