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

// Self-contained correctness oracles: exact path enumeration of the
// verification rule, finite-difference gradient checks, loss anchors and
// greedy equivalence on a tiny target.

#pragma once

#include "specdraft/decode.hpp"

#include "json.hpp"

#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace specdraft {

// Prefix-dependent target and draft tables for one chain: entry p of each
// table is the distribution after the drafted prefix with index p, where a
// prefix x_1..x_m maps to sum_i x_i * vocab^(i-1) offset by the count of
// shorter prefixes.
struct ChainModel {
  int vocab = 2;
  int t = 1;
  std::vector<ProbDist> q;  // prefixes of length 0..t
  std::vector<ProbDist> d;  // prefixes of length 0..t-1

  static std::size_t prefix_index(std::span<const int> prefix, int vocab);
  const ProbDist& q_at(std::span<const int> prefix) const { return q[prefix_index(prefix, vocab)]; }
  const ProbDist& d_at(std::span<const int> prefix) const { return d[prefix_index(prefix, vocab)]; }

  static ChainModel random(int vocab, int t, Rng& rng);
  nlohmann::json to_json() const;
};

// Exact probability of every length-(t+1) token sequence produced by one
// verification iteration whose emitted tokens are continued with the target
// up to t+1 tokens. Indexed by sum_i y_i * vocab^i.
std::vector<double> enumerate_emitted_joint(const ChainModel& m, AcceptanceRule rule = standard_acceptance);

// The same joint under pure target sampling.
std::vector<double> target_joint(const ChainModel& m);

// min(1, sqrt(q/d)): a deliberately wrong rule used to prove the oracle bites.
double mutated_acceptance(double q, double d);

// Relative error ||a - b|| / max(||a||, ||b||, 1e-12).
double normwise_relative_error(std::span<const double> a, std::span<const double> b);

struct GradCheckResult {
  std::string op;
  int cases = 0;
  double worst = 0;  // worst relative error over cases and inputs
};

// Every differentiable primitive, f64, central differences.
std::vector<GradCheckResult> check_gradients(int cases, double h, std::uint64_t seed);

struct OracleOptions {
  AcceptanceRule rule = standard_acceptance;
  int lossless_cases = 120;
  double lossless_tol = 1e-12;
  int grad_cases = 20;
  double grad_h = 1e-5;
  double grad_tol = 1e-4;
  std::uint64_t seed = 7;
};

struct SuiteResult {
  std::string name;
  bool passed = true;
  double seconds = 0;
  std::string detail;
  nlohmann::json counterexample;
};

struct OracleReport {
  bool passed = true;
  std::vector<SuiteResult> suites;
  nlohmann::json counterexample;  // first failing suite's
};

SuiteResult run_lossless_suite(const OracleOptions& options);
SuiteResult run_gradient_suite(const OracleOptions& options);
SuiteResult run_loss_anchor_suite(const OracleOptions& options);
SuiteResult run_greedy_suite(const OracleOptions& options);

// Runs every suite and prints one line per suite with its timing.
OracleReport run_oracles(const OracleOptions& options, std::ostream& log);

}  // namespace specdraft
