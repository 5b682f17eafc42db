// Copyright 2026 The EWS Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "ews/errors.hpp"
#include "ews/grad_check.hpp"
#include "ews/metrics.hpp"
#include "ews/training.hpp"

namespace ews {
namespace {

ModelConfig small_model(std::size_t features = 2) {
  ModelConfig c;
  c.window_length = 3;
  c.features = features;
  c.conv_channels = 4;
  c.hidden = 6;
  c.attention = 4;
  c.dropout = 0.0;
  return c;
}

// Label = sign of feature 0 at the last step plus noise; one label year per block.
WindowTensor toy_windows(std::size_t n, int label_year, std::uint64_t seed, double noise) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  WindowTensor w;
  w.length = 3;
  w.feature_names = {"x0", "x1"};
  std::vector<double> data(n * 6);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t k = 0; k < 6; ++k) data[s * 6 + k] = g(rng);
    const double score = data[s * 6 + 4] + noise * g(rng);
    w.labels.push_back(score > 0.3 ? 1 : 0);
    w.firm_ids.push_back("f" + std::to_string(s));
    w.label_years.push_back(label_year);
    w.end_years.push_back(label_year - 1);
  }
  w.x = Tensor({n, 3, 2}, std::move(data));
  return w;
}

TEST(FocalLoss, BalancedNoFocusingIsHalfLog2) {
  const std::vector<double> p{0.5};
  const std::vector<int> y{1};
  EXPECT_NEAR(focal_loss(p, y, 0.5, 0.0), 0.5 * std::log(2.0), 1e-15);
  EXPECT_NEAR(focal_loss(p, y, 0.5, 0.0), 0.346574, 1e-6);
}

TEST(FocalLoss, HandEvaluation) {
  const std::vector<double> p{0.9};
  const std::vector<int> y{1};
  const double expected = 0.25 * 0.01 * -std::log(0.9);
  EXPECT_NEAR(focal_loss(p, y, 0.25, 2.0), expected, 1e-15);
  EXPECT_NEAR(focal_loss(p, y, 0.25, 2.0), 2.6341e-4, 1e-8);
}

TEST(FocalLoss, SaturatedPredictionLeavesOnlyPenalty) {
  const auto params = init_params(small_model(), 1);
  const std::vector<double> p{1.0 - 1e-12};
  const std::vector<int> y{1};
  const double lambda = 1e-3;
  EXPECT_NEAR(focal_loss(p, y, 0.5, 2.0, lambda, params), lambda * params.squared_norm(), 1e-12);
}

TEST(FocalLoss, DegeneratesToHalfCrossEntropy) {
  for (int yi = 0; yi <= 1; ++yi)
    for (int k = 1; k < 1000; ++k) {
      const double p = k / 1000.0;
      const double bce = -(yi * std::log(p) + (1 - yi) * std::log(1.0 - p));
      const std::vector<double> ps{p};
      const std::vector<int> ys{yi};
      EXPECT_NEAR(focal_loss(ps, ys, 0.5, 0.0), 0.5 * bce, 1e-12);
    }
}

TEST(FocalLoss, NonNegative) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const std::vector<double> p{u(rng)};
    const std::vector<int> y{i % 2};
    EXPECT_GE(focal_loss(p, y, u(rng), 3.0 * u(rng)), 0.0);
  }
}

TEST(FocalLoss, TapeValueMatchesScalarVersion) {
  ad::Tape tape;
  const Tensor p({3, 1}, {0.2, 0.7, 0.95});
  const std::vector<int> y{0, 1, 1};
  const auto v = focal_loss(tape.leaf(p), y, 0.3, 2.0);
  EXPECT_DOUBLE_EQ(v.value().item(), focal_loss(p.values(), y, 0.3, 2.0));
}

TEST(FocalLoss, GradientMatchesFiniteDifferences) {
  const std::vector<int> y{0, 1, 1, 0, 1};
  for (double gamma : {0.0, 0.5, 2.0, 3.0}) {
    const Tensor p({5, 1}, {0.1, 0.3, 0.55, 0.8, 0.97});
    const double err = grad_check(
        [&](ad::Tape&, ad::Var v) { return focal_loss(v, y, 0.3, gamma); }, p);
    EXPECT_LT(err, 1e-6) << "gamma=" << gamma;
  }
}

TEST(FocalLoss, Errors) {
  const std::vector<double> p{std::nan("")};
  const std::vector<int> y{1};
  EXPECT_THROW(focal_loss(p, y, 0.5, 2.0), NumericError);
  EXPECT_THROW(focal_loss(std::vector<double>{0.5}, y, 1.5, 2.0), ConfigError);
  EXPECT_THROW(focal_loss(std::vector<double>{0.5, 0.5}, y, 0.5, 2.0), DimensionError);
}

TEST(Adam, ZeroGradientKeepsParameters) {
  Tensor theta({2, 2}, {1.0, -2.0, 3.0, 0.5});
  const Tensor before = theta;
  AdamState state{{Tensor({2, 2})}, {Tensor({2, 2})}, 0};
  std::vector<Tensor*> ps{&theta};
  const std::vector<Tensor> gs{Tensor({2, 2})};
  TrainConfig cfg;
  for (int i = 0; i < 5; ++i) adam_step(ps, gs, state, cfg);
  EXPECT_EQ(theta, before);
  EXPECT_EQ(state.step, 5u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  for (double g : {-3.0, 1e-3, 250.0}) {
    Tensor theta = Tensor::scalar(1.0);
    AdamState state{{Tensor::scalar(0.0)}, {Tensor::scalar(0.0)}, 0};
    std::vector<Tensor*> ps{&theta};
    adam_step(ps, std::vector<Tensor>{Tensor::scalar(g)}, state, cfg);
    // m_hat = g, v_hat = g^2, so the step is eta * g / (|g| + eps).
    EXPECT_NEAR(theta.item(), 1.0 - 0.01 * g / (std::abs(g) + cfg.epsilon), 1e-15);
  }
}

TEST(Adam, RejectsNonFiniteGradient) {
  Tensor theta = Tensor::scalar(1.0);
  AdamState state{{Tensor::scalar(0.0)}, {Tensor::scalar(0.0)}, 0};
  std::vector<Tensor*> ps{&theta};
  EXPECT_THROW(adam_step(ps, std::vector<Tensor>{Tensor::scalar(INFINITY)}, state, TrainConfig{}),
               NumericError);
  EXPECT_EQ(state.step, 0u);
}

TEST(Split, ValidationIsLatestLabelYear) {
  auto w = toy_windows(10, 2019, 1, 0.0);
  for (std::size_t i = 0; i < 4; ++i) w.label_years[i] = 2020;
  const auto s = chronological_split(w);
  EXPECT_EQ(s.validation.samples(), 4u);
  EXPECT_EQ(s.train.samples(), 6u);
  EXPECT_THROW(chronological_split(toy_windows(5, 2019, 1, 0.0)), ConfigError);
}

TEST(Train, SeparableDataConverges) {
  TrainConfig cfg;
  cfg.batch_size = 400;  // full batch, so each epoch is one deterministic descent step
  cfg.learning_rate = 0.03;
  cfg.max_epochs = 300;
  cfg.patience = 300;
  cfg.lambda = 0.0;
  cfg.seed = 3;
  const auto result =
      train(toy_windows(400, 2019, 1, 0.0), toy_windows(200, 2020, 2, 0.0), cfg, small_model());
  for (std::size_t e = 1; e < 10; ++e)
    EXPECT_LT(result.log[e].train_loss, result.log[e - 1].train_loss) << "epoch " << e + 1;
  double best_auc = 0.0;
  for (const auto& e : result.log) best_auc = std::max(best_auc, e.val_auc.value());
  EXPECT_GE(best_auc, 0.999);
  const auto pred = predict(result.params, toy_windows(200, 2021, 3, 0.0).x);
  EXPECT_GT(roc_auc(pred.probability, toy_windows(200, 2021, 3, 0.0).labels), 0.99);
}

TEST(Train, FlippedLabelsInvertDecision) {
  TrainConfig cfg;
  cfg.max_epochs = 15;
  cfg.batch_size = 64;
  cfg.learning_rate = 0.01;
  cfg.seed = 4;
  auto tr = toy_windows(600, 2019, 5, 0.7), va = toy_windows(200, 2020, 6, 0.7);
  const auto te = toy_windows(400, 2021, 7, 0.7);
  const auto a = train(tr, va, cfg, small_model());
  for (auto& y : tr.labels) y = 1 - y;
  for (auto& y : va.labels) y = 1 - y;
  const auto b = train(tr, va, cfg, small_model());
  const double auc_a = roc_auc(predict(a.params, te.x).probability, te.labels);
  const double auc_b = roc_auc(predict(b.params, te.x).probability, te.labels);
  EXPECT_GT(auc_a, 0.75);
  EXPECT_NEAR(auc_b, 1.0 - auc_a, 0.03);
}

TEST(Train, PatienceZeroStopsAtFirstNonImprovement) {
  TrainConfig cfg;
  cfg.max_epochs = 40;
  cfg.patience = 0;
  cfg.learning_rate = 0.05;
  cfg.seed = 8;
  const auto r =
      train(toy_windows(200, 2019, 9, 1.5), toy_windows(60, 2020, 10, 1.5), cfg, small_model());
  ASSERT_LT(r.log.size(), cfg.max_epochs);
  EXPECT_EQ(r.best_epoch + 1, r.log.size());
  for (std::size_t e = 1; e + 1 < r.log.size(); ++e)
    EXPECT_GT(*r.log[e].val_pr_auc, *r.log[e - 1].val_pr_auc);
  EXPECT_LE(*r.log.back().val_pr_auc, *r.log[r.log.size() - 2].val_pr_auc);
}

TEST(Train, SeededRunsAreIdentical) {
  TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.seed = 11;
  ModelConfig mc = small_model();
  mc.dropout = 0.3;
  const auto tr = toy_windows(150, 2019, 1, 0.5), va = toy_windows(50, 2020, 2, 0.5);
  const auto a = train(tr, va, cfg, mc);
  const auto b = train(tr, va, cfg, mc);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(training_log_csv(a.log), training_log_csv(b.log));
  EXPECT_EQ(checkpoint_json(a.params).dump(), checkpoint_json(b.params).dump());
}

TEST(Train, DefaultAlphaIsOneMinusPrior) {
  TrainConfig cfg;
  cfg.max_epochs = 1;
  const auto tr = toy_windows(100, 2019, 1, 0.0);
  const auto r = train(tr, toy_windows(20, 2020, 2, 0.0), cfg, small_model());
  EXPECT_DOUBLE_EQ(r.alpha, 1.0 - tr.positive_ratio());
}

TEST(Train, Errors) {
  TrainConfig cfg;
  cfg.max_epochs = 1;
  auto tr = toy_windows(50, 2019, 1, 0.0);
  const auto va = toy_windows(20, 2020, 2, 0.0);
  EXPECT_THROW(train(va, tr, cfg, small_model()), ContractError);
  EXPECT_THROW(train(tr.filter([](std::size_t) { return false; }), va, cfg, small_model()),
               ConfigError);
  for (auto& y : tr.labels) y = 0;
  EXPECT_THROW(train(tr, va, cfg, small_model()), ConfigError);
  EXPECT_THROW(train(toy_windows(50, 2019, 1, 0.0), va, cfg, small_model(3)), DimensionError);
}

TEST(TrainConfig, JsonRoundTripAndValidation) {
  TrainConfig c;
  c.alpha = 0.8;
  c.seed = 99;
  const auto d = TrainConfig::from_json(c.to_json());
  EXPECT_EQ(d.to_json(), c.to_json());
  EXPECT_THROW(TrainConfig::from_json({{"gamma", -1.0}}), ConfigError);
  EXPECT_THROW(TrainConfig::from_json({{"threshold", 1.0}}), ConfigError);
}

}  // namespace
}  // namespace ews
