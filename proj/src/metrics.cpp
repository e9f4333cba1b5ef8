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

#include "specdraft/metrics.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

namespace specdraft {

double avg_acceptance_length(std::span<const DecodeTrace> traces) {
  if (traces.empty()) throw std::invalid_argument("avg_acceptance_length: no traces");
  Index emitted = 0, forwards = 0;
  for (const auto& t : traces) {
    emitted += t.emitted();
    forwards += t.target_forwards;
  }
  if (forwards == 0) throw std::invalid_argument("avg_acceptance_length: zero target forward passes");
  return static_cast<double>(emitted) / static_cast<double>(forwards);
}

std::optional<double> acceptance_rate(std::span<const DecodeTrace> traces, int n) {
  if (n < 1) throw std::invalid_argument("acceptance_rate: n must be >= 1");
  Index evaluated = 0, accepted = 0;
  for (const auto& t : traces) {
    for (const auto& it : t.iterations) {
      const auto& a = it.outcome.accepts;
      if (static_cast<int>(a.size()) < n) continue;
      ++evaluated;
      accepted += a[static_cast<std::size_t>(n - 1)];
    }
  }
  if (evaluated == 0) return std::nullopt;
  return static_cast<double>(accepted) / static_cast<double>(evaluated);
}

double draft_overhead_fraction(std::span<const DecodeTrace> traces) {
  double draft = 0, verify = 0;
  for (const auto& t : traces) {
    draft += t.draft_ms;
    verify += t.verify_ms;
  }
  return draft + verify > 0 ? draft / (draft + verify) : 0.0;
}

double speedup_ratio(std::span<const TimedRun> spec, std::span<const TimedRun> vanilla) {
  if (spec.size() != vanilla.size() || spec.empty()) {
    throw std::invalid_argument("speedup_ratio: runs must be paired by prompt");
  }
  double s = 0, v = 0;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    if (spec[i].tokens != vanilla[i].tokens) {
      throw std::invalid_argument("speedup_ratio: unequal token budgets at prompt " + std::to_string(i) + " (" +
                                  std::to_string(spec[i].tokens) + " vs " + std::to_string(vanilla[i].tokens) + ")");
    }
    s += spec[i].ms;
    v += vanilla[i].ms;
  }
  if (!(s > 0)) throw std::invalid_argument("speedup_ratio: speculative walltime must be positive");
  return v / s;
}

void BenchConfig::validate() const {
  if (prompts.empty()) throw std::invalid_argument("bench: prompt set is empty");
  if (repetitions < 1) throw std::invalid_argument("bench: repetitions must be >= 1");
  if (max_new < 1) throw std::invalid_argument("bench: max_new must be >= 1");
  if (temperature < 0) throw std::invalid_argument("bench: temperature must be >= 0");
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0;
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

Rng prompt_rng(const BenchConfig& c, std::size_t i) { return Rng(c.seed, "bench.prompt." + std::to_string(i)); }

Index generated(const DecodeResult& r, std::size_t prompt_len) { return static_cast<Index>(r.tokens.size() - prompt_len); }

double pass_total(const std::vector<TimedRun>& runs) {
  double s = 0;
  for (const auto& r : runs) s += r.ms;
  return s;
}

Index pass_tokens(const std::vector<TimedRun>& runs) {
  Index s = 0;
  for (const auto& r : runs) s += r.tokens;
  return s;
}

}  // namespace

VanillaBaseline measure_vanilla(const TargetModel& target, const BenchConfig& config) {
  config.validate();
  VanillaBaseline base;
  for (int rep = -1; rep < config.repetitions; ++rep) {
    std::vector<TimedRun> pass;
    for (std::size_t i = 0; i < config.prompts.size(); ++i) {
      Rng rng = prompt_rng(config, i);
      DecodeResult r = vanilla_decode_bench(target, config.prompts[i], config.max_new, config.temperature, rng);
      pass.push_back({r.trace.total_ms, generated(r, config.prompts[i].size())});
      if (rep == 0) {
        base.traces.push_back(r.trace);
        base.outputs.push_back(r.tokens);
      }
    }
    if (rep >= 0) base.passes.push_back(std::move(pass));
  }
  return base;
}

CellResult bench_cell(const TargetModel& target, const DraftHead& head, const BenchConfig& config,
                      const VanillaBaseline& vanilla) {
  config.validate();
  CellResult cell;
  std::vector<std::vector<TimedRun>> passes;
  std::vector<double> fractions;
  for (int rep = -1; rep < config.repetitions; ++rep) {
    std::vector<TimedRun> pass;
    std::vector<DecodeTrace> traces;
    for (std::size_t i = 0; i < config.prompts.size(); ++i) {
      Rng rng = prompt_rng(config, i);
      DecodeResult r = spec_decode(target, head, config.prompts[i], config.max_new, config.temperature, rng);
      pass.push_back({r.trace.total_ms, generated(r, config.prompts[i].size())});
      if (rep == 0) cell.outputs.push_back(r.tokens);
      traces.push_back(std::move(r.trace));
    }
    if (rep < 0) continue;
    fractions.push_back(draft_overhead_fraction(traces));
    if (rep == 0) cell.traces = std::move(traces);
    passes.push_back(std::move(pass));
  }

  MetricsReport& m = cell.metrics;
  m.ell = avg_acceptance_length(cell.traces);
  for (int n = 1; n <= head.config().draft_len; ++n) m.alpha.push_back(acceptance_rate(cell.traces, n));
  m.draft_overhead_fraction = median(fractions);

  std::vector<double> spec_totals, vanilla_totals, ratios;
  const std::size_t reps = std::min(passes.size(), vanilla.passes.size());
  for (std::size_t r = 0; r < reps; ++r) {
    ratios.push_back(speedup_ratio(passes[r], vanilla.passes[r]));
    spec_totals.push_back(pass_total(passes[r]));
    vanilla_totals.push_back(pass_total(vanilla.passes[r]));
  }
  const double spec_ms = median(spec_totals), vanilla_ms = median(vanilla_totals);
  m.speedup = vanilla_ms / spec_ms;
  m.speedup_std = stddev(ratios);
  m.tokens_per_s_spec = 1000.0 * static_cast<double>(pass_tokens(passes[0])) / spec_ms;
  m.tokens_per_s_vanilla = 1000.0 * static_cast<double>(pass_tokens(vanilla.passes[0])) / vanilla_ms;
  for (std::size_t i = 0; i < config.prompts.size(); ++i) {
    std::vector<double> s, v;
    for (std::size_t r = 0; r < reps; ++r) {
      s.push_back(passes[r][i].ms);
      v.push_back(vanilla.passes[r][i].ms);
    }
    m.per_prompt_speedup.push_back(median(v) / median(s));
  }
  return cell;
}

std::vector<GridCell> full_grid() {
  std::vector<GridCell> cells;
  for (HeadKind kind : {HeadKind::medusa, HeadKind::eagle}) {
    for (bool al : {false, true}) {
      for (int k = 1; k <= 3; ++k) cells.push_back({kind, k, al});
    }
  }
  return cells;
}

std::vector<BenchRow> run_grid(const TargetModel& target, const BenchConfig& config, const std::vector<GridCell>& cells,
                               const HeadLoader& load, const std::function<void(const BenchRow&)>& on_row) {
  config.validate();
  std::vector<BenchRow> rows;
  auto emit = [&](BenchRow row) {
    if (on_row) on_row(row);
    rows.push_back(std::move(row));
  };
  const VanillaBaseline vanilla = measure_vanilla(target, config);
  {
    BenchRow base;
    base.row_type = "baseline";
    base.kind = "vanilla";
    base.temperature = config.temperature;
    base.metrics.ell = avg_acceptance_length(vanilla.traces);
    std::vector<double> totals;
    for (const auto& p : vanilla.passes) totals.push_back(pass_total(p));
    base.metrics.tokens_per_s_vanilla = 1000.0 * static_cast<double>(pass_tokens(vanilla.passes[0])) / median(totals);
    base.metrics.tokens_per_s_spec = base.metrics.tokens_per_s_vanilla;
    emit(std::move(base));
  }
  std::map<std::pair<std::string, bool>, std::size_t> best;
  for (const auto& cell : cells) {
    BenchRow row;
    row.row_type = "cell";
    row.kind = to_string(cell.kind);
    row.K = cell.K;
    row.adversarial = cell.adversarial;
    row.temperature = config.temperature;
    std::unique_ptr<DraftHead> head = load(cell);
    if (!head) {
      row.missing = true;
    } else {
      row.metrics = bench_cell(target, *head, config, vanilla).metrics;
      auto key = std::make_pair(row.kind, row.adversarial);
      auto it = best.find(key);
      if (it == best.end() || rows[it->second].metrics.speedup < row.metrics.speedup) best[key] = rows.size();
    }
    emit(std::move(row));
  }
  for (const auto& [key, index] : best) {
    BenchRow row = rows[index];
    row.row_type = "best_k";
    emit(std::move(row));
  }
  return rows;
}

namespace {

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

void write_rows_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
  out << "row_type,kind,K,AL,temperature,status,ell,alpha_1,alpha_2,alpha_3,speedup,speedup_std,"
         "draft_overhead_fraction,tokens_per_s_spec,tokens_per_s_vanilla\n";
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    auto alpha = [&](std::size_t n) { return n < m.alpha.size() ? fmt(m.alpha[n]) : std::string(); };
    out << r.row_type << ',' << r.kind << ',' << r.K << ',' << (r.adversarial ? "on" : "off") << ','
        << fmt(r.temperature) << ',' << (r.missing ? "missing" : "ok") << ',';
    if (r.missing) {
      out << ",,,,,,,,\n";
      continue;
    }
    out << fmt(m.ell) << ',' << alpha(0) << ',' << alpha(1) << ',' << alpha(2) << ',' << fmt(m.speedup) << ','
        << fmt(m.speedup_std) << ',' << fmt(m.draft_overhead_fraction) << ',' << fmt(m.tokens_per_s_spec) << ','
        << fmt(m.tokens_per_s_vanilla) << '\n';
  }
}

void write_rows_json(std::ostream& out, const std::vector<BenchRow>& rows, const BenchConfig& config) {
  nlohmann::json doc;
  doc["max_new"] = config.max_new;
  doc["temperature"] = config.temperature;
  doc["repetitions"] = config.repetitions;
  doc["prompts"] = config.prompts.size();
  doc["seed"] = config.seed;
  doc["rows"] = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json j;
    j["row_type"] = r.row_type;
    j["kind"] = r.kind;
    j["K"] = r.K;
    j["adversarial"] = r.adversarial;
    j["temperature"] = r.temperature;
    j["missing"] = r.missing;
    if (!r.missing) {
      const auto& m = r.metrics;
      j["ell"] = m.ell;
      j["alpha"] = nlohmann::json::array();
      for (const auto& a : m.alpha) j["alpha"].push_back(opt_json(a));
      j["speedup"] = m.speedup;
      j["speedup_std"] = m.speedup_std;
      j["draft_overhead_fraction"] = m.draft_overhead_fraction;
      j["tokens_per_s_spec"] = m.tokens_per_s_spec;
      j["tokens_per_s_vanilla"] = m.tokens_per_s_vanilla;
      j["per_prompt_speedup"] = m.per_prompt_speedup;
    }
    doc["rows"].push_back(std::move(j));
  }
  out << doc.dump(2) << "\n";
}

}  // namespace specdraft
