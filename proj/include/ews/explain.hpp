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

// Attention extraction and Shapley attribution over window cells, with
// global, temporal and cohort aggregation plus local waterfall records.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ews/model.hpp"
#include "ews/panel.hpp"

namespace ews {

// Batched model: B x L x F windows in, B probabilities out.
using BatchModel = std::function<std::vector<double>(const Tensor& windows)>;

BatchModel model_function(const ModelParams& params);

enum class PlayerScheme { kPerCell, kPerFeature, kPerTimestep };

std::string to_string(PlayerScheme scheme);
PlayerScheme player_scheme_from_string(const std::string& name);

// Partition of the L x F cells into players. Cell index is t * F + f.
struct Players {
  PlayerScheme scheme = PlayerScheme::kPerFeature;
  std::size_t length = 0;
  std::size_t features = 0;
  std::vector<std::vector<std::size_t>> cells;
  std::vector<std::string> names;

  std::size_t size() const { return cells.size(); }
};

// Steps are named T-L .. T-1 relative to the window's end year + 1.
Players make_players(PlayerScheme scheme, std::size_t length,
                     const std::vector<std::string>& feature_names);

// v(S) = mean over background rows b of f(x with players outside S taken from b).
struct ValueFunction {
  BatchModel model;
  Tensor background;  // B x L x F

  std::size_t background_size() const { return background.rank() == 3 ? background.shape()[0] : 0; }
};

// Up to `max_rows` windows drawn without replacement, in original order.
Tensor select_background(const WindowTensor& windows, std::size_t max_rows, std::uint64_t seed);

struct Attribution {
  PlayerScheme scheme = PlayerScheme::kPerFeature;
  std::vector<std::string> players;
  std::vector<double> phi;
  std::vector<double> standard_error;  // sampled method only
  double v_empty = 0.0;
  double f_x = 0.0;
  std::string method;  // "exact" or "sampled"
  std::size_t permutations = 0;
};

inline constexpr std::size_t kExactPlayerCap = 15;

// Full enumeration of all 2^M coalitions with the Shapley weights. Throws
// ConfigError above `cap` players; use sampled_shapley instead.
Attribution exact_shapley(const ValueFunction& vf, const Tensor& window, const Players& players,
                          std::size_t cap = kExactPlayerCap);

// Permutation sampling: each permutation pairs with one seeded background
// row and walks players in order, so it is unbiased for the same v(S).
Attribution sampled_shapley(const ValueFunction& vf, const Tensor& window, const Players& players,
                            std::size_t permutations, std::uint64_t seed);

// Attributions for every window in `windows` (sampled when `permutations`
// is set, exact otherwise), each with its own derived seed.
std::vector<Attribution> explain_windows(const ValueFunction& vf, const WindowTensor& windows,
                                         const Players& players,
                                         std::optional<std::size_t> permutations,
                                         std::uint64_t seed);

struct AttentionSummary {
  Tensor alpha;                      // S x L
  std::vector<double> probability;   // S
  std::vector<double> mean_predicted_positive;  // per step
  std::vector<double> mean_predicted_negative;
  std::vector<double> mean_label_positive;
  std::vector<double> mean_label_negative;
};

// Throws ContractError for architectures without attention.
AttentionSummary extract_attention(const ModelParams& params, const WindowTensor& windows,
                                   double threshold = 0.5);

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p_two_sided = 1.0;
  double p_greater = 1.0;  // H1: mean(a) > mean(b)
};

WelchResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b);

struct RankedPlayer {
  std::string player;
  double mean_abs_phi = 0.0;
  double mean_phi = 0.0;
};

struct GlobalImportance {
  std::vector<RankedPlayer> ranking;  // descending mean |phi|, ties by name
  // Beeswarm rows: sample, player, phi and the player's feature value (the
  // last step for per-feature players; none for per-timestep players).
  struct Point {
    std::size_t sample;
    std::string player;
    double phi;
    std::optional<double> value;
  };
  std::vector<Point> beeswarm;
};

// Throws ContractError when schemes differ. `windows` (optional) supplies the
// feature values for the beeswarm export under the per-feature scheme.
GlobalImportance aggregate_global(const std::vector<Attribution>& attributions,
                                  const WindowTensor* windows = nullptr);

struct TemporalImportance {
  std::vector<std::string> features;
  std::vector<std::string> steps;          // T-L .. T-1
  std::vector<std::vector<double>> curve;  // [feature][step] mean |phi|
  std::size_t peak_step(std::size_t feature) const;
  double range(std::size_t feature) const;  // max - min over steps
  std::size_t feature_index(const std::string& name) const;
};

// Requires per-cell attributions.
TemporalImportance aggregate_temporal(const std::vector<Attribution>& attributions,
                                      const Players& players);

struct CohortReport {
  std::string split_feature;
  double median = 0.0;
  std::size_t low_size = 0;
  std::size_t high_size = 0;
  std::vector<RankedPlayer> low;
  std::vector<RankedPlayer> high;
};

// Splits samples at the lower median of `split_feature` at the last window
// step; values equal to the median join the low cohort. Throws DataError
// when every value is equal.
CohortReport cohort_analysis(const WindowTensor& windows,
                             const std::vector<Attribution>& attributions,
                             const std::string& split_feature);

struct Waterfall {
  double base = 0.0;  // v(empty)
  double f_x = 0.0;
  struct Bar {
    std::string player;
    double phi;
    double cumulative;
  };
  std::vector<Bar> bars;  // descending |phi|
};

Waterfall waterfall_report(const Attribution& attribution);

nlohmann::json to_json(const Attribution& a);
nlohmann::json to_json(const GlobalImportance& g);
nlohmann::json to_json(const TemporalImportance& t);
nlohmann::json to_json(const CohortReport& c);
nlohmann::json to_json(const Waterfall& w);

std::string beeswarm_csv(const GlobalImportance& g);
std::string temporal_csv(const TemporalImportance& t);
std::string waterfall_csv(const Waterfall& w);
// sample,firm_id,label_year,step,alpha
std::string attention_heatmap_csv(const AttentionSummary& a, const WindowTensor& windows);
// group,step,mean_alpha
std::string attention_curves_csv(const AttentionSummary& a);

}  // namespace ews
