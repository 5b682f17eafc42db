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

// Walk-forward evaluation: for each test year T and lead h, everything is
// fitted on information available before T and scored on label year T.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ews/model.hpp"
#include "ews/panel.hpp"
#include "ews/training.hpp"

namespace ews {

struct LogisticConfig {
  double lambda = 1e-4;  // on weights, not the intercept
  double learning_rate = 0.5;
  std::size_t iterations = 2000;
  double tolerance = 1e-10;  // stop when the largest gradient entry falls below

  nlohmann::json to_json() const;
  static LogisticConfig from_json(const nlohmann::json& j);
};

// L2-regularised logistic regression on flattened L*F windows, fitted by
// full-batch gradient descent from zero.
struct LogisticModel {
  std::vector<double> weights;
  double intercept = 0.0;

  std::vector<double> predict(const WindowTensor& windows) const;
};

LogisticModel fit_logistic(const WindowTensor& windows, const LogisticConfig& config);

// Inputs to one backtest cell, all derived from data before the test year.
struct CellData {
  int test_year = 0;
  int lead = 1;
  Standardizer standardizer;
  WindowTensor train;       // label years before the validation year
  WindowTensor validation;  // latest label year before the test year
  WindowTensor test;        // label year == test_year
  std::vector<std::string> dropped_firms;
};

// Year-T features are blanked before imputation, the standardizer is fitted
// on the feature years that training windows can see (<= T-1-h), and only
// label years <= T-1 enter training.
CellData prepare_cell(const PanelTable& panel, int test_year, int lead,
                      std::size_t window_length);

struct SampleScore {
  std::string firm_id;
  int year = 0;  // label year
  double score = 0.0;
  int label = 0;
};

struct ScoredCell {
  std::vector<double> scores;  // aligned with CellData::test
  std::optional<ModelParams> params;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
};

// A model in the roster: fits on a cell and scores its test windows.
using Scorer = std::function<ScoredCell(const CellData& cell, std::uint64_t seed)>;

Scorer neural_scorer(ModelConfig model, TrainConfig train);
Scorer logistic_scorer(LogisticConfig config);
// Scores looked up by (firm_id, label year) from a CSV with columns
// firm_id,year,score.
Scorer external_scorer(const std::string& csv_path);

struct BacktestConfig {
  std::vector<int> test_years{2021, 2022, 2023, 2024};
  std::vector<int> leads{1};
  std::vector<std::string> models{"tcn_att_lstm", "lstm", "tcn", "logistic"};
  std::map<std::string, std::string> external;  // model name -> score CSV
  std::size_t window_length = 3;
  double threshold = 0.5;
  std::uint64_t seed = 0;
  TrainConfig train;
  ModelConfig model;  // architecture replaced per roster entry
  LogisticConfig logistic;

  void validate() const;
  nlohmann::json to_json() const;
  static BacktestConfig from_json(const nlohmann::json& j);
};

struct CellResult {
  int test_year = 0;
  int lead = 1;
  std::string model;
  std::optional<double> auc;
  std::optional<double> pr_auc;
  std::optional<double> f1;
  std::optional<double> positive_ratio;
  std::size_t samples = 0;
  std::size_t train_samples = 0;
  std::size_t best_epoch = 0;
  std::vector<SampleScore> scores;
  std::optional<ModelParams> params;
  Standardizer standardizer;
  std::vector<EpochLog> log;
};

struct BacktestReport {
  std::vector<CellResult> cells;  // ordered by test year, lead, roster order
};

using ProgressFn = std::function<void(const std::string& message)>;

// Seed for one (test year, lead, model) cell.
std::uint64_t cell_seed(std::uint64_t seed, int test_year, int lead, const std::string& model);

BacktestReport run_backtest(const PanelTable& panel, const BacktestConfig& config,
                            const ProgressFn& progress = {});

// test_year,lead,model,auc,pr_auc,f1,positive_ratio,samples with NA for nulls.
std::string report_csv(const BacktestReport& report);
// Nested record with per-sample scores; undefined metrics are null.
nlohmann::json report_json(const BacktestReport& report, const BacktestConfig& config);
// model,test_year,lead,curve,threshold,x,y for ROC and PR curves.
std::string curves_csv(const BacktestReport& report);
// model,lead,test_year,auc,pr_auc plus one "mean" row per (model, lead).
std::string decay_csv(const BacktestReport& report);

// Mean AUC over test years for (model, lead); nullopt when no year defines it.
std::optional<double> mean_auc(const BacktestReport& report, const std::string& model, int lead);

}  // namespace ews
