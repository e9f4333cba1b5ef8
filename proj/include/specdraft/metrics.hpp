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

// Acceptance metrics over decode traces, walltime comparison, and the
// benchmark grid over head kind x K x adversarial training.

#pragma once

#include "specdraft/decode.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace specdraft {

// Emitted tokens per target forward, pooled over traces.
double avg_acceptance_length(std::span<const DecodeTrace> traces);

// Fraction of evaluations of chain position n (1-based) that accepted; a
// position is evaluated only when every earlier position was accepted.
// Empty when position n was never evaluated.
std::optional<double> acceptance_rate(std::span<const DecodeTrace> traces, int n);

// Draft time over draft plus verify time.
double draft_overhead_fraction(std::span<const DecodeTrace> traces);

struct TimedRun {
  double ms = 0;
  Index tokens = 0;
};

// Total vanilla walltime over total speculative walltime. Runs are paired
// by prompt and must have equal token budgets.
double speedup_ratio(std::span<const TimedRun> spec, std::span<const TimedRun> vanilla);

struct MetricsReport {
  double speedup = 1;
  double speedup_std = 0;
  double ell = 1;
  std::vector<std::optional<double>> alpha;  // alpha[n-1]
  double tokens_per_s_spec = 0;
  double tokens_per_s_vanilla = 0;
  double draft_overhead_fraction = 0;
  std::vector<double> per_prompt_speedup;
};

struct BenchConfig {
  std::vector<std::vector<int>> prompts;
  Index max_new = 128;
  double temperature = 0;
  int repetitions = 3;
  std::uint64_t seed = 0;

  void validate() const;
};

// Vanilla timing shared by every cell at one temperature.
struct VanillaBaseline {
  std::vector<std::vector<TimedRun>> passes;  // repetition x prompt
  std::vector<DecodeTrace> traces;
  std::vector<std::vector<int>> outputs;
};

VanillaBaseline measure_vanilla(const TargetModel& target, const BenchConfig& config);

struct CellResult {
  MetricsReport metrics;
  std::vector<DecodeTrace> traces;  // first measured pass
  std::vector<std::vector<int>> outputs;
};

// One warmup pass is discarded; then `repetitions` timed passes. Ratios are
// medians over passes.
CellResult bench_cell(const TargetModel& target, const DraftHead& head, const BenchConfig& config,
                      const VanillaBaseline& vanilla);

struct GridCell {
  HeadKind kind = HeadKind::medusa;
  int K = 1;
  bool adversarial = false;
};

struct BenchRow {
  std::string row_type;  // "baseline", "cell", "best_k"
  std::string kind;      // "vanilla", "medusa", "eagle"
  int K = 0;
  bool adversarial = false;
  double temperature = 0;
  bool missing = false;
  MetricsReport metrics;
};

using HeadLoader = std::function<std::unique_ptr<DraftHead>(const GridCell&)>;

// Baseline row, one row per cell (missing heads are marked, not fatal),
// then one best-K row per (kind, adversarial) with the highest speedup.
std::vector<BenchRow> run_grid(const TargetModel& target, const BenchConfig& config, const std::vector<GridCell>& cells,
                               const HeadLoader& load, const std::function<void(const BenchRow&)>& on_row = {});

std::vector<GridCell> full_grid();

void write_rows_csv(std::ostream& out, const std::vector<BenchRow>& rows);
void write_rows_json(std::ostream& out, const std::vector<BenchRow>& rows, const BenchConfig& config);

}  // namespace specdraft
