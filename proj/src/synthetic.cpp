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

#include "ews/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "ews/errors.hpp"
#include "ews/io.hpp"

namespace ews {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

constexpr std::size_t kQ = 0;
constexpr std::size_t kDebt = 1;
constexpr std::size_t kCashFlow = 9;
constexpr std::size_t kContinuous = 10;
constexpr double kStLevel = 1.6;      // latent debt above which a firm is flagged
constexpr double kStarStLevel = 2.2;

std::string kind_name(Marginal::Kind k) {
  switch (k) {
    case Marginal::Kind::kLognormal: return "lognormal";
    case Marginal::Kind::kNormal: return "normal";
    case Marginal::Kind::kLogistic: return "logistic";
  }
  return "normal";
}

Marginal::Kind kind_from(const std::string& s) {
  if (s == "lognormal") return Marginal::Kind::kLognormal;
  if (s == "normal") return Marginal::Kind::kNormal;
  if (s == "logistic") return Marginal::Kind::kLogistic;
  throw ConfigError("unknown marginal kind '" + s + "'");
}

}  // namespace

double Marginal::apply(double g) const {
  const double z = location + scale * g;
  switch (kind) {
    case Kind::kLognormal: return shift + std::exp(z);
    case Kind::kNormal: return shift + z;
    case Kind::kLogistic: return shift + sigmoid(z);
  }
  return z;
}

GenConfig GenConfig::defaults() {
  GenConfig c;
  // Ramp up to the 2021 level, then the observed 2021-2024 ratios.
  for (int y = 2014; y <= 2021; ++y) c.positive_ratio[y] = 0.02 + (0.1986 - 0.02) * (y - 2014) / 7.0;
  c.positive_ratio[2022] = 0.2170;
  c.positive_ratio[2023] = 0.2481;
  c.positive_ratio[2024] = 0.3558;
  using K = Marginal::Kind;
  c.marginals = {
      {K::kLognormal, 0.503, 0.723, 0.0},          // tobins_q: median 1.654, mean 2.148
      {K::kLognormal, std::log(0.41), 0.344, 0.0},  // debt_to_asset
      {K::kNormal, 0.628, 0.252, 0.0},             // book_to_market
      {K::kLognormal, std::log(0.581), 0.661, -0.5},  // asset_growth
      {K::kLogistic, 1.823, 1.0, 0.0},             // current_liability_ratio
      {K::kLogistic, -0.456, 1.2, 0.0},            // financial_debt_ratio
      {K::kLogistic, 0.36, 1.0, 0.0},              // current_asset_ratio
      {K::kLognormal, std::log(0.125), 0.57, 0.0},  // receivables_ratio
      {K::kLognormal, std::log(11.6), 1.0, 0.0},    // total_revenue
      {K::kLognormal, std::log(1.33), 1.0, 0.0},    // operating_cash_flow
  };
  return c;
}

void GenConfig::validate() const {
  if (n_firms < 1) throw ConfigError("n_firms must be >= 1");
  if (last_year < first_year) throw ConfigError("last_year precedes first_year");
  if (burn_in < 3) throw ConfigError("burn_in must cover the three-year rule horizon");
  if (!(ar > -1.0 && ar < 1.0)) throw ConfigError("ar must lie in (-1, 1)");
  if (!(noise >= 0.0)) throw ConfigError("noise must be >= 0");
  if (std::isnan(debt_knot) || debt_knot == kInf)
    throw ConfigError("debt_knot must be finite or -inf");
  if (!(missing_rate >= 0.0 && missing_rate < 1.0)) throw ConfigError("missing_rate must lie in [0, 1)");
  if (marginals.size() != kContinuous)
    throw ConfigError("expected " + std::to_string(kContinuous) + " marginals");
  for (int y = first_year; y <= last_year; ++y) {
    const auto it = positive_ratio.find(y);
    if (it == positive_ratio.end())
      throw ConfigError("no positive ratio for year " + std::to_string(y));
    if (!(it->second > 0.0 && it->second < 1.0))
      throw ConfigError("positive ratio for " + std::to_string(y) + " must lie in (0, 1)");
    const double k = std::round(it->second * static_cast<double>(n_firms));
    if (k < 1.0 || k >= static_cast<double>(n_firms))
      throw ConfigError("positive ratio for " + std::to_string(y) + " leaves a single class");
  }
}

nlohmann::json GenConfig::to_json() const {
  nlohmann::json ratios = nlohmann::json::object();
  for (const auto& [y, r] : positive_ratio) ratios[std::to_string(y)] = r;
  nlohmann::json ms = nlohmann::json::array();
  for (const auto& m : marginals)
    ms.push_back({{"kind", kind_name(m.kind)}, {"location", m.location}, {"scale", m.scale},
                  {"shift", m.shift}});
  return {{"n_firms", n_firms},
          {"first_year", first_year},
          {"last_year", last_year},
          {"burn_in", burn_in},
          {"seed", seed},
          {"positive_ratio", ratios},
          {"ar", ar},
          {"a_motive", a_motive},
          {"b_trigger", b_trigger},
          {"trigger_lag", trigger_lag},
          {"c_debt", c_debt},
          {"debt_knot", std::isfinite(debt_knot) ? nlohmann::json(debt_knot) : nlohmann::json()},
          {"d_interaction", d_interaction},
          {"noise", noise},
          {"veto_slope", veto_slope},
          {"veto_threshold", veto_threshold},
          {"missing_rate", missing_rate},
          {"marginals", ms}};
}

GenConfig GenConfig::from_json(const nlohmann::json& j) {
  GenConfig c = defaults();
  c.n_firms = j.value("n_firms", c.n_firms);
  c.first_year = j.value("first_year", c.first_year);
  c.last_year = j.value("last_year", c.last_year);
  c.burn_in = j.value("burn_in", c.burn_in);
  c.seed = j.value("seed", c.seed);
  if (j.contains("positive_ratio")) {
    c.positive_ratio.clear();
    for (const auto& [k, v] : j.at("positive_ratio").items())
      c.positive_ratio[std::stoi(k)] = v.get<double>();
  }
  c.ar = j.value("ar", c.ar);
  c.a_motive = j.value("a_motive", c.a_motive);
  c.b_trigger = j.value("b_trigger", c.b_trigger);
  c.trigger_lag = j.value("trigger_lag", c.trigger_lag);
  c.c_debt = j.value("c_debt", c.c_debt);
  if (j.contains("debt_knot"))
    c.debt_knot = j.at("debt_knot").is_null() ? -std::numeric_limits<double>::infinity()
                                               : j.at("debt_knot").get<double>();
  c.d_interaction = j.value("d_interaction", c.d_interaction);
  c.noise = j.value("noise", c.noise);
  c.veto_slope = j.value("veto_slope", c.veto_slope);
  c.veto_threshold = j.value("veto_threshold", c.veto_threshold);
  c.missing_rate = j.value("missing_rate", c.missing_rate);
  if (j.contains("marginals")) {
    c.marginals.clear();
    for (const auto& m : j.at("marginals"))
      c.marginals.push_back({kind_from(m.at("kind").get<std::string>()),
                             m.at("location").get<double>(), m.at("scale").get<double>(),
                             m.value("shift", 0.0)});
  }
  c.validate();
  return c;
}

GeneratedPanel generate(const GenConfig& config) {
  config.validate();
  const std::size_t n = config.n_firms;
  const int years = config.last_year - config.first_year + 1 + config.burn_in;
  const double innovation = std::sqrt(1.0 - config.ar * config.ar);

  // latent[firm][t][f], t = 0 is first_year - burn_in.
  std::vector<double> latent(n * static_cast<std::size_t>(years) * kContinuous);
  std::vector<double> noise(n * static_cast<std::size_t>(years));
  std::vector<double> missing_draw(latent.size());
  auto at = [&](std::size_t i, int t, std::size_t f) -> double& {
    return latent[(i * static_cast<std::size_t>(years) + static_cast<std::size_t>(t)) * kContinuous + f];
  };
  for (std::size_t i = 0; i < n; ++i) {
    std::mt19937_64 rng(mix_seed(config.seed, i));
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < years; ++t) {
      for (std::size_t f = 0; f < kContinuous; ++f)
        at(i, t, f) = t == 0 ? g(rng) : config.ar * at(i, t - 1, f) + innovation * g(rng);
      noise[i * static_cast<std::size_t>(years) + static_cast<std::size_t>(t)] = g(rng);
      for (std::size_t f = 0; f < kContinuous; ++f)
        missing_draw[(i * static_cast<std::size_t>(years) + static_cast<std::size_t>(t)) * kContinuous + f] = u(rng);
    }
  }

  GeneratedPanel out;
  out.panel.schema = PanelSchema::standard();
  const std::size_t rows = n * static_cast<std::size_t>(config.last_year - config.first_year + 1);
  out.panel.rows.resize(rows);
  for (auto* v : {&out.propensity, &out.motive, &out.trigger, &out.interaction, &out.debt})
    v->resize(rows);
  auto row_index = [&](std::size_t i, int year) {
    return i * static_cast<std::size_t>(config.last_year - config.first_year + 1) +
           static_cast<std::size_t>(year - config.first_year);
  };

  std::vector<double> score(n);
  for (int year = config.first_year; year <= config.last_year; ++year) {
    const int t = year - config.first_year + config.burn_in;
    for (std::size_t i = 0; i < n; ++i) {
      const double q1 = at(i, t - 1, kQ), q2 = at(i, t - 2, kQ), q3 = at(i, t - 3, kQ);
      const double cf1 = at(i, t - 1, kCashFlow), cf2 = at(i, t - 2, kCashFlow);
      const double debt = at(i, t - 1, kDebt);
      const double gate = 1.0 - sigmoid(config.veto_slope * (debt - config.veto_threshold));
      const std::size_t r = row_index(i, year);
      out.motive[r] = gate * config.a_motive * -(q1 + q2 + q3) / 3.0;
      out.trigger[r] = gate * config.b_trigger * (cf1 - config.trigger_lag * cf2);
      out.interaction[r] = gate * config.d_interaction * (-q1) * cf1;
      out.debt[r] = -config.c_debt * (config.debt_knot == -kInf
                                            ? debt
                                            : std::max(0.0, debt - config.debt_knot));
      score[i] = out.motive[r] + out.trigger[r] + out.interaction[r] + out.debt[r] +
                 config.noise * noise[i * static_cast<std::size_t>(years) + static_cast<std::size_t>(t)];
      out.propensity[r] = sigmoid(score[i]);
    }
    const auto k = static_cast<std::size_t>(
        std::round(config.positive_ratio.at(year) * static_cast<double>(n)));
    std::vector<double> sorted = score;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1),
                     sorted.end(), std::greater<>());
    const double threshold = sorted[k - 1];
    for (std::size_t i = 0; i < n; ++i) {
      PanelRow& row = out.panel.rows[row_index(i, year)];
      row.firm_id = "F" + std::string(6 - std::min<std::size_t>(6, std::to_string(i).size()), '0') +
                    std::to_string(i);
      row.year = year;
      row.label = score[i] >= threshold ? 1 : 0;
      row.features.resize(kContinuous + 2);
      for (std::size_t f = 0; f < kContinuous; ++f) {
        const double u = missing_draw[(i * static_cast<std::size_t>(years) + static_cast<std::size_t>(t)) * kContinuous + f];
        if (u < config.missing_rate) row.features[f].reset();
        else row.features[f] = config.marginals[f].apply(at(i, t, f));
      }
      row.features[kContinuous] = at(i, t, kDebt) > kStLevel ? 1.0 : 0.0;
      row.features[kContinuous + 1] = at(i, t, kDebt) > kStarStLevel ? 1.0 : 0.0;
    }
  }
  return out;
}

nlohmann::json ground_truth(const GenConfig& config) {
  config.validate();
  // Weights per lag (1 = the year before the label year).
  struct Driver {
    std::string mechanism, feature;
    std::vector<double> lag_weight;  // lags 1..3
  };
  std::vector<Driver> drivers;
  if (config.a_motive != 0.0)
    drivers.push_back({"motive", kValuationFeature,
                       std::vector<double>(3, std::abs(config.a_motive) / 3.0)});
  if (config.b_trigger != 0.0)
    drivers.push_back({"trigger", kCashFlowFeature,
                       {std::abs(config.b_trigger), std::abs(config.b_trigger * config.trigger_lag),
                        0.0}});
  if (config.d_interaction != 0.0) {
    drivers.push_back({"interaction", kValuationFeature,
                       {std::abs(config.d_interaction), 0.0, 0.0}});
    drivers.push_back({"interaction", kCashFlowFeature,
                       {std::abs(config.d_interaction), 0.0, 0.0}});
  }
  if (config.c_debt != 0.0 || config.veto_slope != 0.0)
    drivers.push_back({"debt", kDebtFeature, {std::abs(config.c_debt), 0.0, 0.0}});

  std::map<std::string, std::vector<double>> per_feature;
  for (const auto& d : drivers) {
    auto& w = per_feature[d.feature];
    w.resize(3, 0.0);
    for (std::size_t k = 0; k < 3; ++k) w[k] += d.lag_weight[k];
  }
  std::vector<std::pair<std::string, double>> ranking;
  for (const auto& [f, w] : per_feature) ranking.emplace_back(f, w[0] + w[1] + w[2]);
  std::stable_sort(ranking.begin(), ranking.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  nlohmann::json j;
  j["mechanisms"] = nlohmann::json::array();
  for (const auto& d : drivers)
    j["mechanisms"].push_back({{"mechanism", d.mechanism}, {"feature", d.feature},
                               {"lag_weight", d.lag_weight}});
  j["feature_ranking"] = nlohmann::json::array();
  for (const auto& [f, w] : ranking) {
    const auto& lags = per_feature[f];
    const auto peak = static_cast<int>(std::max_element(lags.begin(), lags.end()) - lags.begin()) + 1;
    j["feature_ranking"].push_back({{"feature", f}, {"weight", w}, {"lag_weight", lags},
                                    {"peak_lag", peak}});
  }
  j["interactions"] = nlohmann::json::array();
  if (config.d_interaction != 0.0)
    j["interactions"].push_back({kValuationFeature, kCashFlowFeature});
  j["veto"] = {{"feature", kDebtFeature}, {"slope", config.veto_slope},
               {"threshold_latent", config.veto_threshold}};
  j["debt_knot_latent"] = std::isfinite(config.debt_knot) ? nlohmann::json(config.debt_knot)
                                                          : nlohmann::json();
  j["high_debt_cohort_top_driver"] = kDebtFeature;
  j["noise_features"] = nlohmann::json::array();
  for (const auto& name : PanelSchema::standard().feature_names())
    if (!per_feature.contains(name)) j["noise_features"].push_back(name);
  return j;
}

}  // namespace ews
