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

// Ranking and threshold metrics for binary scores.

#include <optional>
#include <span>
#include <vector>

namespace ews {

// Mann-Whitney AUC with tied scores counted one half. Throws
// UndefinedMetricError unless both classes are present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

// Average precision: sum over distinct score thresholds of
// (R_n - R_{n-1}) * P_n. Tied scores share one threshold. Throws
// UndefinedMetricError without positives.
double pr_auc(std::span<const double> scores, std::span<const int> labels);

// Positive prediction when score >= threshold; 0 when precision + recall = 0.
double f1_at_threshold(std::span<const double> scores, std::span<const int> labels,
                       double threshold);

// Same metrics as empty optionals where undefined.
std::optional<double> try_roc_auc(std::span<const double> scores, std::span<const int> labels);
std::optional<double> try_pr_auc(std::span<const double> scores, std::span<const int> labels);

struct CurvePoint {
  double threshold;
  double x;  // FPR for ROC, recall for PR
  double y;  // TPR for ROC, precision for PR
};

// One point per distinct threshold, strongest first; ROC starts at (0, 0).
std::vector<CurvePoint> roc_curve(std::span<const double> scores, std::span<const int> labels);
std::vector<CurvePoint> pr_curve(std::span<const double> scores, std::span<const int> labels);

}  // namespace ews
