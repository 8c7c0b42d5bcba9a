#include <gtest/gtest.h>

#include "kda/tasks.hpp"
#include "kda/train.hpp"

namespace {

kda::TaskStream mqar_stream() {
  return kda::TaskStream::generator(32, [](std::mt19937_64& rng) { return kda::gen_mqar(4, 4, 32, rng()); });
}

kda::TrainConfig small_config(std::size_t steps) {
  kda::TrainConfig cfg;
  cfg.steps = steps;
  cfg.batch_size = 4;
  cfg.eval_size = 8;
  return cfg;
}

}  // namespace

TEST(Train, ZeroLearningRateKeepsLossConstant) {
  auto cfg = small_config(5);
  cfg.learning_rate = 0;
  const auto res = kda::train_toy(kda::TaskStream::fixed({kda::gen_mqar(4, 4, 32, 1)}), cfg);
  ASSERT_EQ(res.curve.size(), 5u);
  for (const auto& p : res.curve) EXPECT_EQ(p.loss, res.curve.front().loss);
  EXPECT_EQ(res.initial_eval_loss, res.final_eval_loss);
}

TEST(Train, Deterministic) {
  const auto cfg = small_config(20);
  const auto a = kda::train_toy(mqar_stream(), cfg);
  const auto b = kda::train_toy(mqar_stream(), cfg);
  ASSERT_EQ(a.curve.size(), b.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i) EXPECT_EQ(a.curve[i].loss, b.curve[i].loss);
  EXPECT_EQ(a.final_eval_loss, b.final_eval_loss);
}

TEST(Train, LossDecreasesOnMqar) {
  auto cfg = small_config(150);
  cfg.batch_size = 8;
  const auto res = kda::train_toy(mqar_stream(), cfg);
  EXPECT_LT(res.final_eval_loss, res.initial_eval_loss);
}

TEST(Train, SgdRuns) {
  auto cfg = small_config(10);
  cfg.optimizer = kda::OptimizerKind::SGD;
  cfg.learning_rate = 0.1;
  const auto res = kda::train_toy(mqar_stream(), cfg);
  EXPECT_TRUE(std::isfinite(res.final_eval_loss));
}

TEST(Train, LogEvery) {
  auto cfg = small_config(10);
  cfg.log_every = 4;
  const auto res = kda::train_toy(mqar_stream(), cfg);
  ASSERT_EQ(res.curve.size(), 4u);
  EXPECT_EQ(res.curve[1].step, 4u);
  EXPECT_EQ(res.curve.back().step, 10u);
}

TEST(Train, DivergenceReportsStep) {
  auto cfg = small_config(200);
  cfg.optimizer = kda::OptimizerKind::SGD;
  cfg.learning_rate = 1e12;
  EXPECT_THROW(kda::train_toy(mqar_stream(), cfg), kda::NumericError);
}

TEST(Train, ConfigChecks) {
  auto cfg = small_config(0);
  EXPECT_THROW(kda::train_toy(mqar_stream(), cfg), kda::ContractError);
  EXPECT_THROW(kda::TaskStream::fixed({}), kda::ContractError);
}
