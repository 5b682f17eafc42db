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

#include "ews/metrics.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

#include "ews/errors.hpp"

namespace ews {

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw DimensionError("metric: " + std::to_string(scores.size()) + " scores vs " +
                         std::to_string(labels.size()) + " labels");
  for (int y : labels)
    if (y != 0 && y != 1) throw DataError("metric: labels must be 0 or 1");
}

std::vector<std::size_t> descending(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

struct Counts {
  std::size_t pos = 0;
  std::size_t neg = 0;
};

Counts count(std::span<const int> labels) {
  Counts c;
  for (int y : labels) (y == 1 ? c.pos : c.neg)++;
  return c;
}

// Cumulative (threshold, tp, fp) after each distinct score, descending.
struct Step {
  double threshold;
  std::size_t tp;
  std::size_t fp;
};

std::vector<Step> steps(std::span<const double> scores, std::span<const int> labels) {
  const auto order = descending(scores);
  std::vector<Step> out;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (labels[order[i]] == 1 ? tp : fp)++;
    if (i + 1 == order.size() || scores[order[i + 1]] != scores[order[i]])
      out.push_back({scores[order[i]], tp, fp});
  }
  return out;
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const Counts c = count(labels);
  if (c.pos == 0 || c.neg == 0)
    throw UndefinedMetricError("roc_auc: labels contain a single class");
  // Midranks in ascending order; ties share the average rank.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    std::size_t pos_in_group = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      pos_in_group += static_cast<std::size_t>(labels[order[j]]);
      ++j;
    }
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    rank_sum += midrank * static_cast<double>(pos_in_group);
    i = j;
  }
  const double np = static_cast<double>(c.pos), nn = static_cast<double>(c.neg);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double pr_auc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const Counts c = count(labels);
  if (c.pos == 0) throw UndefinedMetricError("pr_auc: no positive labels");
  double ap = 0.0;
  std::size_t prev_tp = 0;
  for (const Step& s : steps(scores, labels)) {
    if (s.tp == prev_tp) continue;
    const double precision = static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fp);
    ap += static_cast<double>(s.tp - prev_tp) / static_cast<double>(c.pos) * precision;
    prev_tp = s.tp;
  }
  return ap;
}

double f1_at_threshold(std::span<const double> scores, std::span<const int> labels,
                       double threshold) {
  check_inputs(scores, labels);
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (predicted && labels[i] == 1) ++tp;
    else if (predicted) ++fp;
    else if (labels[i] == 1) ++fn;
  }
  if (tp == 0) return 0.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

std::optional<double> try_roc_auc(std::span<const double> scores, std::span<const int> labels) {
  try {
    return roc_auc(scores, labels);
  } catch (const UndefinedMetricError&) {
    return std::nullopt;
  }
}

std::optional<double> try_pr_auc(std::span<const double> scores, std::span<const int> labels) {
  try {
    return pr_auc(scores, labels);
  } catch (const UndefinedMetricError&) {
    return std::nullopt;
  }
}

std::vector<CurvePoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const Counts c = count(labels);
  if (c.pos == 0 || c.neg == 0)
    throw UndefinedMetricError("roc_curve: labels contain a single class");
  std::vector<CurvePoint> out{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  for (const Step& s : steps(scores, labels))
    out.push_back({s.threshold, static_cast<double>(s.fp) / static_cast<double>(c.neg),
                   static_cast<double>(s.tp) / static_cast<double>(c.pos)});
  return out;
}

std::vector<CurvePoint> pr_curve(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const Counts c = count(labels);
  if (c.pos == 0) throw UndefinedMetricError("pr_curve: no positive labels");
  std::vector<CurvePoint> out;
  for (const Step& s : steps(scores, labels))
    out.push_back({s.threshold, static_cast<double>(s.tp) / static_cast<double>(c.pos),
                   static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fp)});
  return out;
}

}  // namespace ews
