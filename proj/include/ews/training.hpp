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

#pragma once

// Focal-loss objective, Adam, and the mini-batch loop with chronological
// validation and early stopping on validation PR-AUC.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "ews/autodiff.hpp"
#include "ews/model.hpp"
#include "ews/panel.hpp"

namespace ews {

struct TrainConfig {
  std::optional<double> alpha;  // unset: 1 - positive prior of the training split
  double gamma = 2.0;
  double lambda = 1e-4;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 30;
  std::size_t patience = 10;
  double threshold = 0.5;  // for the logged validation F1
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

inline constexpr double kProbabilityClamp = 1e-7;

// Mean focal data term over the batch. `probability` is B x 1.
ad::Var focal_loss(ad::Var probability, std::span<const int> labels, double alpha,
                   double gamma);
double focal_loss(std::span<const double> probability, std::span<const int> labels,
                  double alpha, double gamma);
// Data term plus lambda * ||theta||^2.
double focal_loss(std::span<const double> probability, std::span<const int> labels,
                  double alpha, double gamma, double lambda, const ModelParams& params);

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;

  static AdamState zeros_like(const ModelParams& params);
};

// Bias-corrected Adam; grads already include the L2 term. Throws
// NumericError on non-finite gradients and DimensionError on shape mismatch.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads,
               AdamState& state, const TrainConfig& config);

struct ChronoSplit {
  WindowTensor train;
  WindowTensor validation;  // the latest label year
};

// Throws ConfigError when either side would be empty.
ChronoSplit chronological_split(const WindowTensor& windows);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_auc;
  std::optional<double> val_pr_auc;
  double val_f1 = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  ModelParams params;  // best validation epoch
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double alpha = 0.5;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Validation windows must carry strictly later label years than every
// training window. Throws ConfigError on an empty split or a single-class
// training set.
TrainResult train(const WindowTensor& train_windows, const WindowTensor& validation,
                  const TrainConfig& config, const ModelConfig& model_config,
                  const EpochCallback& on_epoch = {});

// epoch,train_loss,val_auc,val_pr_auc,val_f1 with NA for undefined metrics.
std::string training_log_csv(const std::vector<EpochLog>& log);

}  // namespace ews
