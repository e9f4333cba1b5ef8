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

#include "specdraft/adversarial.hpp"

#include "json.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

namespace specdraft {
namespace {

using testing_fixtures::tiny_target;
using Mat = RowMatrix<double>;
using T64 = Tensor<double>;

T64 col(std::initializer_list<double> v) {
  Mat m(static_cast<Index>(v.size()), 1);
  Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return T64::from(m);
}

TEST(Losses, DiscriminatorAtChanceIsTwoLnTwo) {
  EXPECT_NEAR(discriminator_loss(col({0.5, 0.5}), col({0.5})).item(), 2 * std::numbers::ln2, 1e-9);
}

TEST(Losses, DiscriminatorHandValue) {
  EXPECT_NEAR(discriminator_loss(col({0.8}), col({0.3})).item(), 0.5798, 1e-4);
}

TEST(Losses, PerfectDiscriminatorApproachesZero) {
  EXPECT_LT(discriminator_loss(col({1 - 1e-9}), col({1e-9})).item(), 1e-6);
}

TEST(Losses, SaturatedProbabilitiesAreClampedAndCounted) {
  std::size_t saturated = 0;
  const double l = discriminator_loss(col({0.0}), col({1.0}), &saturated).item();
  EXPECT_TRUE(std::isfinite(l));
  EXPECT_NEAR(l, -2 * std::log(kProbClamp), 1e-6);
  EXPECT_EQ(saturated, 2u);
}

TEST(Losses, GeneratorHandValues) {
  const T64 same = T64::from(Mat::Constant(2, 4, 0.3));
  EXPECT_NEAR(generator_loss(col({0.5, 0.5}), same, same, 0.1).item(), 0.0693, 1e-4);
  EXPECT_NEAR(generator_loss(col({0.9, 0.9}), same, same, 0.5).item(), 0.0527, 1e-4);
}

TEST(Losses, GeneratorWithoutAdversaryIsDistillation) {
  Rng rng(1);
  Mat d(3, 5), q(3, 5);
  for (Index i = 0; i < 15; ++i) {
    d.data()[i] = rng.normal(0, 2);
    q.data()[i] = rng.normal(0, 2);
  }
  const double g = generator_loss(col({0.2, 0.7, 0.9}), T64::from(d), T64::from(q), 0.0).item();
  const double kl = distill_loss(T64::from(d), T64::from(q)).item();
  EXPECT_EQ(std::memcmp(&g, &kl, sizeof g), 0);
}

TEST(Losses, TwoTokenKl) {
  Mat q(1, 2), d(1, 2);
  q << std::log(2.0), 0.0;
  d << 0.0, 0.0;
  const double want = (2.0 / 3) * std::log(4.0 / 3) + (1.0 / 3) * std::log(2.0 / 3);
  EXPECT_NEAR(distill_loss(T64::from(d), T64::from(q)).item(), want, 1e-9);
}

TEST(Losses, DistillOfIdenticalLogitsIsZero) {
  const T64 q = T64::from(Mat::Random(4, 7));
  EXPECT_NEAR(distill_loss(q, q).item(), 0, 1e-12);
}

TEST(Losses, NearOneHotTargetReducesToCrossEntropy) {
  Mat q(1, 3), d(1, 3);
  q << 60, 0, 0;
  d << 0.5, 1.0, -1.0;
  const double lse = std::log(std::exp(0.5) + std::exp(1.0) + std::exp(-1.0));
  EXPECT_NEAR(distill_loss(T64::from(d), T64::from(q)).item(), lse - 0.5, 1e-9);
}

TEST(Losses, ShapeMismatchRaises) {
  EXPECT_THROW(distill_loss(T64::from(Mat::Zero(2, 3)), T64::from(Mat::Zero(2, 4))), ShapeError);
}

TEST(Discriminator, StartsAtExactlyOneHalf) {
  const auto disc = Discriminator::init({32, 256, 2, 64}, 1);
  const auto p = disc.discriminate(Tensor<float>::from(RowMatrix<float>::Random(5, 32)),
                                   Tensor<float>::from(RowMatrix<float>::Random(5, 256)));
  for (Index i = 0; i < 5; ++i) EXPECT_EQ(p.value()(i, 0), 0.5f);
}

TEST(Discriminator, OutputStaysInsideUnitInterval) {
  auto disc = Discriminator::init({32, 256, 1, 64}, 2);
  Rng rng(3);
  auto& w = disc.final_layer().weight.mutable_value();
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = float(rng.normal(0, 0.1));
  const auto p = disc.discriminate(Tensor<float>::from(RowMatrix<float>::Random(8, 32)),
                                   Tensor<float>::from(RowMatrix<float>::Random(8, 256)));
  for (Index i = 0; i < 8; ++i) {
    EXPECT_GT(p.value()(i, 0), 0.0f);
    EXPECT_LT(p.value()(i, 0), 1.0f);
  }
}

TEST(Discriminator, SlotsAreNotInterchangeable) {
  auto disc = Discriminator::init({32, 256, 1, 64}, 4);
  Rng rng(5);
  auto& w = disc.final_layer().weight.mutable_value();
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = float(rng.normal(0, 0.1));
  const auto h = Tensor<float>::from(RowMatrix<float>::Random(1, 32));
  const auto a = Tensor<float>::from(RowMatrix<float>::Random(1, 256));
  const auto b = Tensor<float>::from(RowMatrix<float>::Random(1, 256));
  EXPECT_NE(disc.discriminate(h, a, b).item(), disc.discriminate(h, b, a).item());
}

TEST(Discriminator, DepthOutsideRangeRejected) {
  EXPECT_THROW(Discriminator::init({32, 256, 4, 64}, 1), std::invalid_argument);
  EXPECT_THROW(Discriminator::init({32, 256, 0, 64}, 1), std::invalid_argument);
}

struct TrainingFixture : ::testing::Test {
  TargetModel target = tiny_target(21);
  HiddenCache cache = HiddenCache::build(target, testing_fixtures::periodic_corpus(6000), 8, 32, 5);

  TrainConfig config(bool adversarial) const {
    TrainConfig c;
    c.adversarial = adversarial;
    c.batch = 8;
    c.steps_per_epoch = 3;
    c.max_epochs = 2;
    c.disc_width = 32;
    c.lr_g = 1e-3;
    c.lr_d = 1e-3;
    c.seed = 9;
    return c;
  }

  std::unique_ptr<DraftHead> head(HeadKind kind, int K = 1) const {
    return make_head(head_config_for(target.config(), kind, K), target, 3);
  }
};

TEST_F(TrainingFixture, BatchesAlignTargetLogitsWithHiddenStates) {
  BatchSampler sampler(cache, target, 3, 1);
  const TrainBatch b = sampler.next(4);
  ASSERT_EQ(b.q_logits.size(), 3u);
  for (int j = 0; j < 3; ++j) {
    RowMatrix<float> want = b.aligned_hidden[j].value() * target.lm_head().value();
    EXPECT_TRUE(b.q_logits[j].value().isApprox(want, 1e-5f)) << j;
  }
}

TEST_F(TrainingFixture, GeneratorStepLeavesDiscriminatorAndTargetUntouched) {
  for (HeadKind kind : {HeadKind::medusa, HeadKind::eagle}) {
    auto h = head(kind, 2);
    HeadTrainer trainer(*h, target, cache, config(true));
    const TrainBatch b = trainer.sampler().next(8);
    const auto disc_before = params_hash(trainer.discriminator()->parameters());
    const auto head_before = params_hash(h->parameters());
    const auto target_before = target.weights_hash();
    trainer.generator_step(b);
    EXPECT_EQ(params_hash(trainer.discriminator()->parameters()), disc_before);
    EXPECT_NE(params_hash(h->parameters()), head_before);
    EXPECT_EQ(target.weights_hash(), target_before);
  }
}

TEST_F(TrainingFixture, DiscriminatorStepLeavesHeadUntouched) {
  auto h = head(HeadKind::eagle, 1);
  HeadTrainer trainer(*h, target, cache, config(true));
  const TrainBatch b = trainer.sampler().next(8);
  const auto disc_before = params_hash(trainer.discriminator()->parameters());
  const auto head_before = params_hash(h->parameters());
  trainer.discriminator_step(b);
  EXPECT_NE(params_hash(trainer.discriminator()->parameters()), disc_before);
  EXPECT_EQ(params_hash(h->parameters()), head_before);
}

TEST_F(TrainingFixture, ZeroLambdaStepEqualsPureDistillationStep) {
  for (HeadKind kind : {HeadKind::medusa, HeadKind::eagle}) {
    auto a = head(kind), b = head(kind);
    TrainConfig with_disc = config(true);
    with_disc.lambda = 0;
    HeadTrainer ta(*a, target, cache, with_disc);
    HeadTrainer tb(*b, target, cache, config(false));
    EXPECT_FALSE(tb.discriminator().has_value());
    const TrainBatch batch = ta.sampler().next(8);
    ta.generator_step(batch);
    tb.generator_step(batch);
    EXPECT_EQ(params_hash(a->parameters()), params_hash(b->parameters())) << to_string(kind);
  }
}

TEST_F(TrainingFixture, NoStepsMeansNoChange) {
  auto h = head(HeadKind::medusa);
  TrainConfig c = config(true);
  c.g_steps = 0;
  c.d_steps = 0;
  HeadTrainer trainer(*h, target, cache, c);
  const auto before = params_hash(h->parameters());
  const auto disc_before = params_hash(trainer.discriminator()->parameters());
  trainer.train_epoch();
  EXPECT_EQ(params_hash(h->parameters()), before);
  EXPECT_EQ(params_hash(trainer.discriminator()->parameters()), disc_before);
}

TEST_F(TrainingFixture, DiscriminatorStepDoesNotIncreaseItsLoss) {
  auto h = head(HeadKind::medusa);
  TrainConfig c = config(true);
  c.lr_d = 1e-3;
  c.optimizer = OptimizerKind::sgd;
  HeadTrainer trainer(*h, target, cache, c);
  for (int i = 0; i < 10; ++i) {
    const TrainBatch b = trainer.sampler().next(8);
    const double before = trainer.evaluate(b).loss_d;
    trainer.discriminator_step(b);
    EXPECT_LE(trainer.evaluate(b).loss_d, before + 1e-7) << i;
  }
}

TEST_F(TrainingFixture, MaxEpochsOneRunsOneEpoch) {
  auto h = head(HeadKind::medusa);
  TrainConfig c = config(true);
  c.max_epochs = 1;
  HeadTrainer trainer(*h, target, cache, c);
  const auto report = train_until_equilibrium(trainer, c);
  EXPECT_EQ(report.epochs.size(), 1u);
  EXPECT_EQ(report.stop, StopReason::max_epochs);
}

TEST_F(TrainingFixture, SameSeedSameReport) {
  auto run = [&] {
    auto h = head(HeadKind::eagle);
    HeadTrainer trainer(*h, target, cache, config(true));
    std::ostringstream out;
    train_until_equilibrium(trainer, config(true), [&](const EpochStats& s, StopReason r) {
      EpochStats copy = s;
      write_report_line(out, copy, r);
    });
    return std::make_pair(out.str(), params_hash(h->parameters()));
  };
  EXPECT_EQ(run(), run());
}

TEST_F(TrainingFixture, ReportLinesCarryEveryField) {
  std::ostringstream out;
  EpochStats s;
  s.epoch = 3;
  write_report_line(out, s, StopReason::nash);
  const auto j = nlohmann::json::parse(out.str());
  for (const char* key : {"epoch", "L_G", "L_D", "disc_accuracy", "distill", "adversarial", "stop"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["stop"], "nash");
}

TEST(StopRule, ChanceAccuracyForWindowStopsAtNash) {
  TrainConfig c;
  c.nash_window = 5;
  std::vector<EpochStats> h(4);
  for (auto& e : h) e.disc_accuracy = 0.5;
  EXPECT_EQ(decide_stop(h, c, true), StopReason::none);
  h.emplace_back().disc_accuracy = 0.5;
  EXPECT_EQ(decide_stop(h, c, true), StopReason::nash);
  EXPECT_EQ(decide_stop(h, c, false), StopReason::none);
}

TEST(StopRule, TenfoldGrowthOverThreeEpochsDiverges) {
  TrainConfig c;
  std::vector<EpochStats> h(4);
  const double losses[] = {1, 3, 6, 10};
  for (int i = 0; i < 4; ++i) {
    h[i].loss_g = losses[i];
    h[i].disc_accuracy = 0.9;
  }
  EXPECT_EQ(decide_stop(h, c, true), StopReason::divergence);
  h[3].loss_g = 9.9;
  EXPECT_EQ(decide_stop(h, c, true), StopReason::none);
}

TEST(StopRule, MaxEpochsFires) {
  TrainConfig c;
  c.max_epochs = 2;
  std::vector<EpochStats> h(2);
  for (auto& e : h) e.disc_accuracy = 1.0;
  EXPECT_EQ(decide_stop(h, c, true), StopReason::max_epochs);
}

}  // namespace
}  // namespace specdraft
