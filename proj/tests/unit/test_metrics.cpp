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

#include "fixtures.hpp"

#include "specdraft/metrics.hpp"

#include <gtest/gtest.h>

#include <sstream>

namespace specdraft {
namespace {

DecodeIteration iteration(std::vector<bool> accepts, int draft_len) {
  DecodeIteration it;
  it.outcome.draft_len = draft_len;
  it.outcome.accepts = accepts;
  for (bool a : accepts) it.outcome.accepted += a;
  it.outcome.bonus = it.outcome.accepted == draft_len;
  it.outcome.emitted.assign(static_cast<std::size_t>(it.outcome.accepted + 1), 0);
  return it;
}

DecodeTrace trace_of(const std::vector<std::vector<bool>>& patterns, int draft_len) {
  DecodeTrace t;
  for (const auto& p : patterns) t.iterations.push_back(iteration(p, draft_len));
  t.target_forwards = static_cast<Index>(t.iterations.size());
  return t;
}

TEST(Metrics, VanillaTraceHasUnitAcceptanceLength) {
  const std::vector<DecodeTrace> traces{trace_of({{}, {}, {}}, 0)};
  EXPECT_DOUBLE_EQ(avg_acceptance_length(traces), 1.0);
}

TEST(Metrics, AcceptanceLengthIsEmittedOverForwards) {
  DecodeTrace t;
  for (int i = 0; i < 9; ++i) t.iterations.push_back(iteration({true, true, false}, 3));
  t.iterations.push_back(iteration({true, false}, 3));
  t.target_forwards = 10;
  // 9 x 3 + 2 = 29 emitted over 10 forwards
  const std::vector<DecodeTrace> traces{t};
  EXPECT_DOUBLE_EQ(avg_acceptance_length(traces), 2.9);
}

TEST(Metrics, ZeroForwardsRaises) {
  const std::vector<DecodeTrace> traces{DecodeTrace{}};
  EXPECT_THROW(avg_acceptance_length(traces), std::invalid_argument);
}

TEST(Metrics, ConditionalAcceptanceRates) {
  const std::vector<DecodeTrace> traces{trace_of({{true, true, false}, {true, false}, {false}}, 3)};
  EXPECT_NEAR(*acceptance_rate(traces, 1), 2.0 / 3, 1e-15);
  EXPECT_NEAR(*acceptance_rate(traces, 2), 0.5, 1e-15);
  EXPECT_NEAR(*acceptance_rate(traces, 3), 0.0, 1e-15);
}

TEST(Metrics, AllAcceptGivesUnitRates) {
  const std::vector<DecodeTrace> traces{trace_of({{true, true, true}, {true, true, true}}, 3)};
  for (int n = 1; n <= 3; ++n) EXPECT_DOUBLE_EQ(*acceptance_rate(traces, n), 1.0);
}

TEST(Metrics, NeverEvaluatedPositionIsAbsent) {
  const std::vector<DecodeTrace> traces{trace_of({{false}, {false}}, 3)};
  EXPECT_FALSE(acceptance_rate(traces, 2).has_value());
}

TEST(Metrics, SpeedupIsVanillaOverSpec) {
  const std::vector<TimedRun> spec{{4000, 128}}, vanilla{{10000, 128}};
  EXPECT_DOUBLE_EQ(speedup_ratio(spec, vanilla), 2.5);
  EXPECT_DOUBLE_EQ(speedup_ratio(vanilla, vanilla), 1.0);
}

TEST(Metrics, SpeedupIgnoresPromptOrder) {
  const std::vector<TimedRun> s{{1, 5}, {3, 7}}, v{{2, 5}, {5, 7}};
  const std::vector<TimedRun> s2{{3, 7}, {1, 5}}, v2{{5, 7}, {2, 5}};
  EXPECT_DOUBLE_EQ(speedup_ratio(s, v), speedup_ratio(s2, v2));
}

TEST(Metrics, UnequalBudgetsRaise) {
  const std::vector<TimedRun> spec{{1, 127}}, vanilla{{1, 128}};
  EXPECT_THROW(speedup_ratio(spec, vanilla), std::invalid_argument);
}

TEST(Metrics, OverheadFractionIsDraftShare) {
  DecodeTrace t;
  t.draft_ms = 1;
  t.verify_ms = 3;
  const std::vector<DecodeTrace> traces{t};
  EXPECT_DOUBLE_EQ(draft_overhead_fraction(traces), 0.25);
}

struct GridFixture : ::testing::Test {
  TargetModel target = testing_fixtures::tiny_target(41);
  BenchConfig config() const {
    BenchConfig c;
    c.prompts = {{72, 101}, {87, 104, 121}};
    c.max_new = 8;
    c.repetitions = 1;
    c.seed = 3;
    return c;
  }
  HeadLoader loader(bool all_missing = false) const {
    return [this, all_missing](const GridCell& cell) -> std::unique_ptr<DraftHead> {
      if (all_missing || (cell.kind == HeadKind::eagle && cell.K == 3)) return nullptr;
      return make_head(head_config_for(target.config(), cell.kind, cell.K), target, 1);
    };
  }
};

TEST_F(GridFixture, SingleCellGivesOneRowPlusBaselineAndBest) {
  const auto rows = run_grid(target, config(), {{HeadKind::medusa, 1, false}}, loader());
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].row_type, "baseline");
  EXPECT_DOUBLE_EQ(rows[0].metrics.ell, 1.0);
  EXPECT_DOUBLE_EQ(rows[0].metrics.speedup, 1.0);
  EXPECT_EQ(rows[1].row_type, "cell");
  EXPECT_EQ(rows[2].row_type, "best_k");
}

TEST_F(GridFixture, FullGridHasTwelveCellsAndBestRowsAreMaxima) {
  const auto rows = run_grid(target, config(), full_grid(), loader());
  std::size_t cells = 0, missing = 0;
  for (const auto& r : rows) {
    if (r.row_type != "cell") continue;
    ++cells;
    missing += r.missing;
    if (!r.missing) {
      EXPECT_GE(r.metrics.ell, 1.0);
      for (const auto& a : r.metrics.alpha) {
        if (a) {
          EXPECT_GE(*a, 0.0);
          EXPECT_LE(*a, 1.0);
        }
      }
    }
  }
  EXPECT_EQ(cells, 12u);
  EXPECT_EQ(missing, 2u);
  for (const auto& best : rows) {
    if (best.row_type != "best_k") continue;
    double max_speedup = 0;
    for (const auto& r : rows) {
      if (r.row_type == "cell" && !r.missing && r.kind == best.kind && r.adversarial == best.adversarial) {
        max_speedup = std::max(max_speedup, r.metrics.speedup);
      }
    }
    EXPECT_EQ(best.metrics.speedup, max_speedup);
  }
}

TEST_F(GridFixture, CsvHasHeaderAndOneLinePerRow) {
  const auto rows = run_grid(target, config(), {{HeadKind::eagle, 1, true}}, loader());
  std::ostringstream out;
  write_rows_csv(out, rows);
  const std::string s = out.str();
  EXPECT_EQ(s.rfind("row_type,kind,K,AL,temperature,status,ell,alpha_1", 0), 0u);
  EXPECT_EQ(static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')), rows.size() + 1);
}

TEST_F(GridFixture, AcceptanceStatisticsAreReproducible) {
  const auto a = run_grid(target, config(), {{HeadKind::eagle, 2, false}}, loader());
  const auto b = run_grid(target, config(), {{HeadKind::eagle, 2, false}}, loader());
  EXPECT_EQ(a[1].metrics.ell, b[1].metrics.ell);
  EXPECT_EQ(a[1].metrics.alpha, b[1].metrics.alpha);
}

}  // namespace
}  // namespace specdraft
