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

// Seeded firm-year panels with planted repurchase rules: a multi-year
// undervaluation motive, a one-year cash-flow trigger, their interaction and
// a high-debt veto. Labels come from per-year quantile thresholds.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "ews/panel.hpp"

namespace ews {

// Observed value = shift + exp(location + scale * g) (lognormal),
// location + scale * g (normal) or sigmoid(location + scale * g) (logistic)
// for a standard-normal latent g.
struct Marginal {
  enum class Kind { kLognormal, kNormal, kLogistic };
  Kind kind = Kind::kNormal;
  double location = 0.0;
  double scale = 1.0;
  double shift = 0.0;

  double apply(double g) const;
  bool operator==(const Marginal&) const = default;
};

struct GenConfig {
  std::size_t n_firms = 5000;
  int first_year = 2014;
  int last_year = 2024;
  int burn_in = 4;  // latent years simulated before first_year, never emitted
  std::uint64_t seed = 20240607;
  std::map<int, double> positive_ratio;  // per emitted year

  double ar = 0.8;
  double a_motive = 0.9;
  double b_trigger = 1.5;
  double trigger_lag = 0.5;  // trigger is cf[y-1] - trigger_lag * cf[y-2]
  double c_debt = 2.0;
  double debt_knot = 0.75;  // penalty is c_debt * max(0, debt - knot); -inf makes it linear
  double d_interaction = 1.5;
  double noise = 1.0;
  double veto_slope = 16.0;
  double veto_threshold = 0.85;  // latent debt level where the veto reaches one half
  double missing_rate = 0.01;   // features blanked at random, labels never

  std::vector<Marginal> marginals;  // one per continuous feature

  static GenConfig defaults();
  void validate() const;
  nlohmann::json to_json() const;
  static GenConfig from_json(const nlohmann::json& j);
};

struct GeneratedPanel {
  PanelTable panel;
  // Row-aligned with panel.rows.
  std::vector<double> propensity;   // sigmoid of the noisy score
  std::vector<double> motive;       // gated a * motive
  std::vector<double> trigger;      // gated b * trigger
  std::vector<double> interaction;  // gated d * interaction
  std::vector<double> debt;         // -c * debt
};

GeneratedPanel generate(const GenConfig& config);

// Planted driver structure: mechanisms, per-feature and per-lag weights,
// and interacting pairs.
nlohmann::json ground_truth(const GenConfig& config);

// Names of the schema columns that carry the planted signal.
inline constexpr const char* kValuationFeature = "tobins_q";
inline constexpr const char* kDebtFeature = "debt_to_asset";
inline constexpr const char* kCashFlowFeature = "operating_cash_flow";

}  // namespace ews
