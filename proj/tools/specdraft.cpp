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

// specdraft command-line driver.
//
// Exit codes: 0 success, 1 verification or runtime failure, 2 usage or
// configuration error.

#include "specdraft/config.hpp"
#include "specdraft/io.hpp"
#include "specdraft/metrics.hpp"
#include "specdraft/oracles.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace specdraft;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config = "configs/desk.json";
  std::optional<std::uint64_t> seed;
  std::string kind = "medusa";
  int k = 1;
  std::string adversarial = "off";
  bool allow_any_k = false;
  bool grid = false;
  bool cell = false;
  std::optional<double> temperature;
  std::optional<int> repetitions;
  std::optional<Index> max_new;
  std::string prompt;
  std::string trace;
  bool mutate_acceptance = false;
};

RunConfig load_config(const Options& o) {
  RunConfig c = load_run_config(o.config);
  if (o.seed) c.seed = *o.seed;
  c.target_train.seed = c.seed;
  return c;
}

fs::path target_path(const RunConfig& c) { return c.paths.checkpoint_dir / "target.ckpt"; }

std::string head_stem(HeadKind kind, int K, bool adversarial, std::uint64_t seed) {
  return "head_" + to_string(kind) + "_k" + std::to_string(K) + (adversarial ? "_al" : "_noal") + "_s" +
         std::to_string(seed);
}

bool parse_switch(const std::string& v) {
  if (v == "on") return true;
  if (v == "off") return false;
  throw UsageError("--adversarial must be 'on' or 'off', got '" + v + "'");
}

TargetModel require_target(const RunConfig& c) {
  const fs::path p = target_path(c);
  if (!fs::exists(p)) throw ConfigError("target checkpoint not found: " + p.string() + " (run train-target first)");
  return load_target(p);
}

int cmd_train_target(const Options& o) {
  const RunConfig c = load_config(o);
  const auto corpus = load_corpus(c.paths.corpus_dir);
  fs::create_directories(c.paths.checkpoint_dir);
  fs::create_directories(c.paths.output_dir);
  const fs::path curve_path = c.paths.output_dir / "target_loss.csv";
  std::ofstream curve(curve_path);
  curve << "step,loss\n";
  const auto t0 = std::chrono::steady_clock::now();
  TargetModel model = TargetModel::init(c.target, c.seed);
  train_target(model, corpus, c.target_train, [&](const LossPoint& p) {
    curve << p.step << "," << p.loss << "\n";
    if (p.step % 100 == 0 || p.step + 1 == c.target_train.steps) {
      std::fprintf(stderr, "step %ld loss %.4f\n", static_cast<long>(p.step), p.loss);
    }
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  save_target(target_path(c), model);
  std::printf("target checkpoint %s (%.1f s), loss curve %s\n", target_path(c).c_str(), secs, curve_path.c_str());
  return kExitOk;
}

int cmd_train_head(const Options& o) {
  const RunConfig c = load_config(o);
  if (!o.allow_any_k && (o.k < 1 || o.k > 3)) throw UsageError("--k must be 1, 2 or 3 (use --allow-any-k to override)");
  const HeadKind kind = parse_head_kind(o.kind);
  const bool adversarial = parse_switch(o.adversarial);
  const TargetModel target = require_target(c);
  const TrainConfig tc = c.train_config(adversarial);
  const auto corpus = load_corpus(c.paths.corpus_dir);

  auto head = make_head(c.head_config(kind, o.k), target, c.seed);
  const HiddenCache cache = HiddenCache::build(target, corpus, tc.cache_windows, tc.cache_window_len, c.seed);
  HeadTrainer trainer(*head, target, cache, tc);

  fs::create_directories(c.paths.checkpoint_dir);
  fs::create_directories(c.paths.output_dir);
  const std::string stem = head_stem(kind, o.k, adversarial, c.seed);
  const fs::path report_path = c.paths.output_dir / (stem + ".report.jsonl");
  std::ofstream report(report_path);
  const TrainingReport r = train_until_equilibrium(trainer, tc, [&](const EpochStats& s, StopReason stop) {
    write_report_line(report, s, stop);
    report.flush();
    std::fprintf(stderr, "epoch %d L_G %.4f L_D %.4f acc %.3f distill %.4f%s\n", s.epoch, s.loss_g, s.loss_d,
                 s.disc_accuracy, s.distill, stop == StopReason::none ? "" : (" stop=" + to_string(stop)).c_str());
  });
  const fs::path head_path = c.paths.checkpoint_dir / (stem + ".ckpt");
  save_head(head_path, *head);
  if (trainer.discriminator()) save_discriminator(c.paths.checkpoint_dir / (stem + ".disc.ckpt"), *trainer.discriminator());
  std::printf("head checkpoint %s: %zu epochs, stop=%s, %.1f s, report %s\n", head_path.c_str(), r.epochs.size(),
              to_string(r.stop).c_str(), r.seconds, report_path.c_str());
  return kExitOk;
}

BenchConfig bench_config(const RunConfig& c, const Options& o) {
  BenchConfig b;
  b.prompts = load_prompts(c.paths.prompts);
  b.max_new = o.max_new.value_or(c.bench.max_new);
  b.temperature = o.temperature.value_or(c.bench.temperature);
  b.repetitions = o.repetitions.value_or(c.bench.repetitions);
  b.seed = c.seed;
  b.validate();
  return b;
}

int cmd_bench(const Options& o) {
  if (o.grid == o.cell) throw UsageError("bench needs exactly one of --grid or --cell");
  const RunConfig c = load_config(o);
  const TargetModel target = require_target(c);
  const BenchConfig b = bench_config(c, o);

  std::vector<GridCell> cells;
  if (o.grid) {
    cells = full_grid();
  } else {
    if (!o.allow_any_k && (o.k < 1 || o.k > 3)) throw UsageError("--k must be 1, 2 or 3");
    cells.push_back({parse_head_kind(o.kind), o.k, parse_switch(o.adversarial)});
  }
  const HeadLoader loader = [&](const GridCell& cell) -> std::unique_ptr<DraftHead> {
    const fs::path p = c.paths.checkpoint_dir / (head_stem(cell.kind, cell.K, cell.adversarial, c.seed) + ".ckpt");
    if (!fs::exists(p)) {
      std::fprintf(stderr, "missing head checkpoint %s\n", p.c_str());
      return nullptr;
    }
    return load_head(p, target);
  };
  const auto rows = run_grid(target, b, cells, loader, [](const BenchRow& r) {
    if (r.missing) {
      std::fprintf(stderr, "%-8s %-6s K=%d AL=%s missing\n", r.row_type.c_str(), r.kind.c_str(), r.K,
                   r.adversarial ? "on" : "off");
      return;
    }
    std::fprintf(stderr, "%-8s %-6s K=%d AL=%-3s ell %.3f speedup %.3f overhead %.3f\n", r.row_type.c_str(),
                 r.kind.c_str(), r.K, r.adversarial ? "on" : "off", r.metrics.ell, r.metrics.speedup,
                 r.metrics.draft_overhead_fraction);
  });

  fs::create_directories(c.paths.output_dir);
  char tag[32];
  std::snprintf(tag, sizeof tag, "%s_T%g", o.grid ? "grid" : "cell", b.temperature);
  const fs::path csv = c.paths.output_dir / ("bench_" + std::string(tag) + ".csv");
  const fs::path json = c.paths.output_dir / ("bench_" + std::string(tag) + ".json");
  {
    std::ofstream f(csv);
    write_rows_csv(f, rows);
  }
  {
    std::ofstream f(json);
    write_rows_json(f, rows, b);
  }
  std::printf("wrote %s and %s\n", csv.c_str(), json.c_str());
  const bool any = std::any_of(rows.begin(), rows.end(), [](const BenchRow& r) { return r.row_type == "cell" && !r.missing; });
  return any ? kExitOk : kExitUsage;
}

int cmd_decode(const Options& o) {
  const RunConfig c = load_config(o);
  const TargetModel target = require_target(c);
  const HeadKind kind = parse_head_kind(o.kind);
  const bool adversarial = parse_switch(o.adversarial);
  const fs::path p = c.paths.checkpoint_dir / (head_stem(kind, o.k, adversarial, c.seed) + ".ckpt");
  if (!fs::exists(p)) throw ConfigError("head checkpoint not found: " + p.string());
  const auto head = load_head(p, target);
  if (o.prompt.empty()) throw UsageError("--prompt must not be empty");
  const auto prompt = bytes_to_tokens(o.prompt);
  Rng rng(c.seed, "decode");
  const DecodeResult r = spec_decode(target, *head, prompt, o.max_new.value_or(c.bench.max_new),
                                     o.temperature.value_or(c.bench.temperature), rng);
  std::cout << tokens_to_bytes(r.tokens) << std::endl;
  std::vector<DecodeTrace> traces{r.trace};
  std::fprintf(stderr, "%zu iterations, %ld emitted, ell %.3f\n", r.trace.iterations.size(),
               static_cast<long>(r.trace.emitted()), avg_acceptance_length(traces));
  if (!o.trace.empty()) {
    std::ofstream f(o.trace);
    write_trace_jsonl(f, r.trace);
  }
  return kExitOk;
}

int cmd_verify_oracles(const Options& o) {
  OracleOptions opts;
  if (o.mutate_acceptance) opts.rule = mutated_acceptance;
  const OracleReport report = run_oracles(opts, std::cout);
  if (!report.passed) {
    std::cout << "first counterexample: " << report.counterexample.dump() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Draft-head speculative decoding on a byte-level transformer"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Run configuration JSON")->capture_default_str();
    sub->add_option("--seed", o.seed, "Root seed (overrides the config)");
  };
  auto add_head = [&](CLI::App* sub) {
    sub->add_option("--kind", o.kind, "Head architecture")->check(CLI::IsMember({"medusa", "eagle"}));
    sub->add_option("--k", o.k, "Layers per draft head");
    sub->add_option("--adversarial", o.adversarial, "Adversarial training: on or off");
    sub->add_flag("--allow-any-k", o.allow_any_k, "Accept K outside 1..3");
  };

  auto* train_target = app.add_subcommand("train-target", "Train and freeze the target model");
  add_common(train_target);

  auto* train_head = app.add_subcommand("train-head", "Train one draft head against the frozen target");
  add_common(train_head);
  add_head(train_head);

  auto* bench = app.add_subcommand("bench", "Benchmark speculative against vanilla decoding");
  add_common(bench);
  add_head(bench);
  bench->add_flag("--grid", o.grid, "Run every kind x K x adversarial cell");
  bench->add_flag("--cell", o.cell, "Run the single cell given by --kind/--k/--adversarial");
  bench->add_option("--temperature", o.temperature, "Sampling temperature (0 = greedy)");
  bench->add_option("--repetitions", o.repetitions, "Timed passes per cell");
  bench->add_option("--max-new", o.max_new, "Tokens generated per prompt");

  auto* decode = app.add_subcommand("decode", "Speculatively decode one prompt");
  add_common(decode);
  add_head(decode);
  decode->add_option("--prompt", o.prompt, "Prompt text")->required();
  decode->add_option("--temperature", o.temperature, "Sampling temperature (0 = greedy)");
  decode->add_option("--max-new", o.max_new, "Tokens to generate");
  decode->add_option("--trace", o.trace, "Write the decode trace as JSON lines");

  auto* verify = app.add_subcommand("verify-oracles", "Run the self-contained correctness oracles");
  verify->add_flag("--mutate-acceptance", o.mutate_acceptance)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_target) return cmd_train_target(o);
    if (*train_head) return cmd_train_head(o);
    if (*bench) return cmd_bench(o);
    if (*decode) return cmd_decode(o);
    if (*verify) return cmd_verify_oracles(o);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitUsage;
  } catch (const InputError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitUsage;
}
