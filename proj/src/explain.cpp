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

#include "ews/explain.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "ews/errors.hpp"
#include "ews/io.hpp"

namespace ews {

namespace {

constexpr std::size_t kMaxBatchWindows = 1 << 16;

std::string step_name(std::size_t t, std::size_t length) {
  return "T-" + std::to_string(length - t);
}

void check_window(const Tensor& window, const Players& players) {
  const std::size_t cells = players.length * players.features;
  if (window.size() != cells)
    throw DimensionError("window has " + std::to_string(window.size()) + " cells, players cover " +
                         std::to_string(cells));
}

void check_background(const ValueFunction& vf, const Players& players) {
  if (vf.background_size() == 0) throw ConfigError("value function has an empty background");
  if (vf.background.shape()[1] != players.length || vf.background.shape()[2] != players.features)
    throw DimensionError("background windows do not match the player layout");
}

// Per-cell membership for one coalition.
std::vector<char> cell_mask(const Players& players, const std::vector<char>& in_coalition) {
  std::vector<char> mask(players.length * players.features, 0);
  for (std::size_t j = 0; j < players.size(); ++j)
    if (in_coalition[j])
      for (std::size_t c : players.cells[j]) mask[c] = 1;
  return mask;
}

// Runs `model` over windows produced by `fill(k, out)` for k in [0, count).
std::vector<double> evaluate(const BatchModel& model, std::size_t count, std::size_t cells,
                             std::size_t length, std::size_t features,
                             const std::function<void(std::size_t, double*)>& fill) {
  std::vector<double> out;
  out.reserve(count);
  for (std::size_t start = 0; start < count; start += kMaxBatchWindows) {
    const std::size_t n = std::min(kMaxBatchWindows, count - start);
    std::vector<double> data(n * cells);
    for (std::size_t k = 0; k < n; ++k) fill(start + k, data.data() + k * cells);
    const auto p = model(Tensor({n, length, features}, std::move(data)));
    if (p.size() != n) throw ContractError("model returned the wrong number of outputs");
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<double> coalition_values(const ValueFunction& vf, const Tensor& x,
                                     const Players& players,
                                     const std::vector<std::vector<char>>& masks) {
  const std::size_t cells = players.length * players.features;
  const std::size_t nb = vf.background_size();
  std::vector<std::vector<char>> cm;
  cm.reserve(masks.size());
  for (const auto& m : masks) cm.push_back(cell_mask(players, m));
  const auto outputs = evaluate(
      vf.model, masks.size() * nb, cells, players.length, players.features,
      [&](std::size_t k, double* dst) {
        const auto& mask = cm[k / nb];
        const double* bg = vf.background.data() + (k % nb) * cells;
        for (std::size_t c = 0; c < cells; ++c) dst[c] = mask[c] ? x[c] : bg[c];
      });
  std::vector<double> v(masks.size(), 0.0);
  for (std::size_t m = 0; m < masks.size(); ++m) {
    double s = 0.0;
    for (std::size_t b = 0; b < nb; ++b) s += outputs[m * nb + b];
    v[m] = s / static_cast<double>(nb);
  }
  return v;
}

std::vector<RankedPlayer> rank(const std::vector<const Attribution*>& attrs) {
  if (attrs.empty()) return {};
  const auto& players = attrs.front()->players;
  std::vector<RankedPlayer> out(players.size());
  for (std::size_t j = 0; j < players.size(); ++j) {
    out[j].player = players[j];
    for (const Attribution* a : attrs) {
      out[j].mean_abs_phi += std::abs(a->phi[j]);
      out[j].mean_phi += a->phi[j];
    }
    out[j].mean_abs_phi /= static_cast<double>(attrs.size());
    out[j].mean_phi /= static_cast<double>(attrs.size());
  }
  std::stable_sort(out.begin(), out.end(), [](const RankedPlayer& a, const RankedPlayer& b) {
    if (a.mean_abs_phi != b.mean_abs_phi) return a.mean_abs_phi > b.mean_abs_phi;
    return a.player < b.player;
  });
  return out;
}

void check_same_scheme(const std::vector<Attribution>& attributions) {
  for (const auto& a : attributions)
    if (a.scheme != attributions.front().scheme || a.players != attributions.front().players)
      throw ContractError("attributions mix player schemes");
}

nlohmann::json ranking_json(const std::vector<RankedPlayer>& r) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& p : r)
    out.push_back({{"player", p.player}, {"mean_abs_phi", p.mean_abs_phi}, {"mean_phi", p.mean_phi}});
  return out;
}

std::vector<double> column_mean(const Tensor& alpha, const std::vector<std::size_t>& rows) {
  if (rows.empty()) return {};
  const std::size_t l = alpha.shape()[1];
  std::vector<double> m(l, 0.0);
  for (std::size_t r : rows)
    for (std::size_t t = 0; t < l; ++t) m[t] += alpha[r * l + t];
  for (double& v : m) v /= static_cast<double>(rows.size());
  return m;
}

}  // namespace

BatchModel model_function(const ModelParams& params) {
  return [params](const Tensor& windows) { return predict(params, windows).probability; };
}

std::string to_string(PlayerScheme scheme) {
  switch (scheme) {
    case PlayerScheme::kPerCell: return "per_cell";
    case PlayerScheme::kPerFeature: return "per_feature";
    case PlayerScheme::kPerTimestep: return "per_timestep";
  }
  return "per_feature";
}

PlayerScheme player_scheme_from_string(const std::string& name) {
  if (name == "per_cell") return PlayerScheme::kPerCell;
  if (name == "per_feature") return PlayerScheme::kPerFeature;
  if (name == "per_timestep") return PlayerScheme::kPerTimestep;
  throw ConfigError("unknown player scheme '" + name + "'");
}

Players make_players(PlayerScheme scheme, std::size_t length,
                     const std::vector<std::string>& feature_names) {
  const std::size_t f_count = feature_names.size();
  if (length == 0 || f_count == 0) throw ConfigError("players need L >= 1 and F >= 1");
  Players p;
  p.scheme = scheme;
  p.length = length;
  p.features = f_count;
  switch (scheme) {
    case PlayerScheme::kPerCell:
      for (std::size_t t = 0; t < length; ++t)
        for (std::size_t f = 0; f < f_count; ++f) {
          p.cells.push_back({t * f_count + f});
          p.names.push_back(feature_names[f] + "@" + step_name(t, length));
        }
      break;
    case PlayerScheme::kPerFeature:
      for (std::size_t f = 0; f < f_count; ++f) {
        std::vector<std::size_t> cells;
        for (std::size_t t = 0; t < length; ++t) cells.push_back(t * f_count + f);
        p.cells.push_back(std::move(cells));
        p.names.push_back(feature_names[f]);
      }
      break;
    case PlayerScheme::kPerTimestep:
      for (std::size_t t = 0; t < length; ++t) {
        std::vector<std::size_t> cells;
        for (std::size_t f = 0; f < f_count; ++f) cells.push_back(t * f_count + f);
        p.cells.push_back(std::move(cells));
        p.names.push_back(step_name(t, length));
      }
      break;
  }
  return p;
}

Tensor select_background(const WindowTensor& windows, std::size_t max_rows, std::uint64_t seed) {
  if (windows.samples() == 0 || max_rows == 0) throw ConfigError("background needs at least one window");
  std::vector<std::size_t> idx(windows.samples());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (idx.size() > max_rows) {
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(max_rows);
    std::sort(idx.begin(), idx.end());
  }
  return windows.select(idx).x;
}

Attribution exact_shapley(const ValueFunction& vf, const Tensor& window, const Players& players,
                          std::size_t cap) {
  check_window(window, players);
  check_background(vf, players);
  const std::size_t m = players.size();
  if (m > cap)
    throw ConfigError("exact Shapley enumeration is capped at " + std::to_string(cap) +
                      " players (got " + std::to_string(m) + "); use the sampled method");
  const std::size_t subsets = std::size_t{1} << m;
  std::vector<std::vector<char>> masks(subsets, std::vector<char>(m, 0));
  for (std::size_t s = 0; s < subsets; ++s)
    for (std::size_t j = 0; j < m; ++j) masks[s][j] = (s >> j) & 1u;
  const auto v = coalition_values(vf, window, players, masks);

  // weight[k] = k! (m - k - 1)! / m!
  std::vector<double> weight(m);
  for (std::size_t k = 0; k < m; ++k)
    weight[k] = std::exp(std::lgamma(static_cast<double>(k + 1)) +
                         std::lgamma(static_cast<double>(m - k)) -
                         std::lgamma(static_cast<double>(m + 1)));
  Attribution a;
  a.scheme = players.scheme;
  a.players = players.names;
  a.method = "exact";
  a.phi.assign(m, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    const std::size_t bit = std::size_t{1} << j;
    for (std::size_t s = 0; s < subsets; ++s) {
      if (s & bit) continue;
      a.phi[j] += weight[static_cast<std::size_t>(std::popcount(s))] * (v[s | bit] - v[s]);
    }
  }
  a.v_empty = v.front();
  a.f_x = v.back();
  return a;
}

Attribution sampled_shapley(const ValueFunction& vf, const Tensor& window, const Players& players,
                            std::size_t permutations, std::uint64_t seed) {
  check_window(window, players);
  check_background(vf, players);
  if (permutations < 1) throw ConfigError("sampled Shapley needs at least one permutation");
  const std::size_t m = players.size();
  const std::size_t cells = players.length * players.features;
  const std::size_t nb = vf.background_size();

  std::vector<std::vector<std::size_t>> orders(permutations);
  std::vector<std::size_t> bg(permutations);
  for (std::size_t k = 0; k < permutations; ++k) {
    std::mt19937_64 rng(mix_seed(seed, k));
    orders[k].resize(m);
    std::iota(orders[k].begin(), orders[k].end(), std::size_t{0});
    std::shuffle(orders[k].begin(), orders[k].end(), rng);
    bg[k] = std::uniform_int_distribution<std::size_t>(0, nb - 1)(rng);
  }
  // Window (k, i) holds the first i players of permutation k.
  const auto outputs = evaluate(
      vf.model, permutations * (m + 1), cells, players.length, players.features,
      [&](std::size_t w, double* dst) {
        const std::size_t k = w / (m + 1), steps = w % (m + 1);
        std::copy_n(vf.background.data() + bg[k] * cells, cells, dst);
        for (std::size_t i = 0; i < steps; ++i)
          for (std::size_t c : players.cells[orders[k][i]]) dst[c] = window[c];
      });

  std::vector<double> mean(m, 0.0), m2(m, 0.0);
  double v_empty = 0.0;
  for (std::size_t k = 0; k < permutations; ++k) {
    const double* o = outputs.data() + k * (m + 1);
    v_empty += o[0];
    const double n = static_cast<double>(k + 1);
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t j = orders[k][i];
      const double d = o[i + 1] - o[i];
      const double delta = d - mean[j];
      mean[j] += delta / n;
      m2[j] += delta * (d - mean[j]);
    }
  }
  Attribution a;
  a.scheme = players.scheme;
  a.players = players.names;
  a.method = "sampled";
  a.permutations = permutations;
  a.phi = mean;
  a.standard_error.resize(m);
  for (std::size_t j = 0; j < m; ++j)
    a.standard_error[j] = permutations > 1
                              ? std::sqrt(m2[j] / static_cast<double>(permutations - 1) /
                                          static_cast<double>(permutations))
                              : 0.0;
  a.v_empty = v_empty / static_cast<double>(permutations);
  a.f_x = outputs[m];  // all players present
  return a;
}

std::vector<Attribution> explain_windows(const ValueFunction& vf, const WindowTensor& windows,
                                         const Players& players,
                                         std::optional<std::size_t> permutations,
                                         std::uint64_t seed) {
  const std::size_t cells = players.length * players.features;
  std::vector<Attribution> out;
  out.reserve(windows.samples());
  for (std::size_t s = 0; s < windows.samples(); ++s) {
    Tensor x({players.length, players.features},
             std::vector<double>(windows.x.data() + s * cells, windows.x.data() + (s + 1) * cells));
    out.push_back(permutations ? sampled_shapley(vf, x, players, *permutations, mix_seed(seed, s))
                               : exact_shapley(vf, x, players));
  }
  return out;
}

AttentionSummary extract_attention(const ModelParams& params, const WindowTensor& windows,
                                   double threshold) {
  if (!params.config.has_attention())
    throw ContractError("extract_attention: architecture " + to_string(params.config.arch) +
                        " has no attention layer");
  if (windows.samples() == 0) throw ConfigError("extract_attention: no windows");
  auto pred = predict(params, windows.x);
  AttentionSummary s;
  s.alpha = std::move(pred.attention);
  s.probability = std::move(pred.probability);
  std::vector<std::size_t> pp, pn, lp, ln;
  for (std::size_t i = 0; i < windows.samples(); ++i) {
    (s.probability[i] >= threshold ? pp : pn).push_back(i);
    (windows.labels[i] == 1 ? lp : ln).push_back(i);
  }
  s.mean_predicted_positive = column_mean(s.alpha, pp);
  s.mean_predicted_negative = column_mean(s.alpha, pn);
  s.mean_label_positive = column_mean(s.alpha, lp);
  s.mean_label_negative = column_mean(s.alpha, ln);
  return s;
}

WelchResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) throw DataError("welch_t_test: need two samples per group");
  auto moments = [](const std::vector<double>& x) {
    double m = 0.0;
    for (double v : x) m += v;
    m /= static_cast<double>(x.size());
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::pair{m, ss / static_cast<double>(x.size() - 1)};
  };
  const auto [ma, va] = moments(a);
  const auto [mb, vb] = moments(b);
  const double sa = va / static_cast<double>(a.size()), sb = vb / static_cast<double>(b.size());
  if (sa + sb == 0.0) throw DataError("welch_t_test: both samples are constant");
  WelchResult r;
  r.t = (ma - mb) / std::sqrt(sa + sb);
  r.df = (sa + sb) * (sa + sb) /
         (sa * sa / static_cast<double>(a.size() - 1) + sb * sb / static_cast<double>(b.size() - 1));
  const boost::math::students_t dist(r.df);
  r.p_greater = boost::math::cdf(boost::math::complement(dist, r.t));
  r.p_two_sided = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
  return r;
}

GlobalImportance aggregate_global(const std::vector<Attribution>& attributions,
                                  const WindowTensor* windows) {
  GlobalImportance g;
  if (attributions.empty()) return g;
  check_same_scheme(attributions);
  std::vector<const Attribution*> all;
  for (const auto& a : attributions) all.push_back(&a);
  g.ranking = rank(all);
  const auto scheme = attributions.front().scheme;
  const auto& names = attributions.front().players;
  for (std::size_t s = 0; s < attributions.size(); ++s)
    for (std::size_t j = 0; j < names.size(); ++j) {
      std::optional<double> value;
      if (windows && s < windows->samples()) {
        const std::size_t l = windows->window_length(), f = windows->features();
        if (scheme == PlayerScheme::kPerFeature) value = windows->at(s, l - 1, j);
        else if (scheme == PlayerScheme::kPerCell) value = windows->at(s, j / f, j % f);
      }
      g.beeswarm.push_back({s, names[j], attributions[s].phi[j], value});
    }
  return g;
}

std::size_t TemporalImportance::peak_step(std::size_t feature) const {
  const auto& c = curve.at(feature);
  return static_cast<std::size_t>(std::max_element(c.begin(), c.end()) - c.begin());
}

double TemporalImportance::range(std::size_t feature) const {
  const auto& c = curve.at(feature);
  const auto [lo, hi] = std::minmax_element(c.begin(), c.end());
  return *hi - *lo;
}

std::size_t TemporalImportance::feature_index(const std::string& name) const {
  const auto it = std::find(features.begin(), features.end(), name);
  if (it == features.end()) throw ConfigError("unknown feature '" + name + "'");
  return static_cast<std::size_t>(it - features.begin());
}

TemporalImportance aggregate_temporal(const std::vector<Attribution>& attributions,
                                      const Players& players) {
  if (players.scheme != PlayerScheme::kPerCell)
    throw ContractError("aggregate_temporal needs per-cell players");
  check_same_scheme(attributions);
  if (!attributions.empty() && attributions.front().players != players.names)
    throw ContractError("attributions do not match the player layout");
  TemporalImportance t;
  for (std::size_t f = 0; f < players.features; ++f) {
    const auto& n = players.names[f];
    t.features.push_back(n.substr(0, n.rfind('@')));
  }
  for (std::size_t s = 0; s < players.length; ++s) t.steps.push_back(step_name(s, players.length));
  t.curve.assign(players.features, std::vector<double>(players.length, 0.0));
  for (const auto& a : attributions)
    for (std::size_t j = 0; j < players.size(); ++j) {
      const std::size_t c = players.cells[j].front();
      t.curve[c % players.features][c / players.features] +=
          std::abs(a.phi[j]) / static_cast<double>(attributions.size());
    }
  return t;
}

CohortReport cohort_analysis(const WindowTensor& windows,
                             const std::vector<Attribution>& attributions,
                             const std::string& split_feature) {
  if (windows.samples() != attributions.size())
    throw DimensionError("cohort_analysis: one attribution per window required");
  if (attributions.empty()) throw DataError("cohort_analysis: no samples");
  check_same_scheme(attributions);
  const auto it = std::find(windows.feature_names.begin(), windows.feature_names.end(), split_feature);
  if (it == windows.feature_names.end())
    throw ConfigError("cohort_analysis: unknown split feature '" + split_feature + "'");
  const std::size_t f = static_cast<std::size_t>(it - windows.feature_names.begin());
  const std::size_t last = windows.window_length() - 1;
  std::vector<double> values(windows.samples());
  for (std::size_t s = 0; s < values.size(); ++s) values[s] = windows.at(s, last, f);
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() == sorted.back())
    throw DataError("cohort_analysis: split feature '" + split_feature + "' is constant");
  CohortReport r;
  r.split_feature = split_feature;
  r.median = sorted[(sorted.size() - 1) / 2];
  std::vector<const Attribution*> low, high;
  for (std::size_t s = 0; s < values.size(); ++s)
    (values[s] <= r.median ? low : high).push_back(&attributions[s]);
  r.low_size = low.size();
  r.high_size = high.size();
  r.low = rank(low);
  r.high = rank(high);
  return r;
}

Waterfall waterfall_report(const Attribution& a) {
  Waterfall w;
  w.base = a.v_empty;
  w.f_x = a.f_x;
  std::vector<std::size_t> order(a.phi.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return std::abs(a.phi[x]) > std::abs(a.phi[y]);
  });
  double running = a.v_empty;
  for (std::size_t j : order) {
    running += a.phi[j];
    w.bars.push_back({a.players[j], a.phi[j], running});
  }
  return w;
}

nlohmann::json to_json(const Attribution& a) {
  nlohmann::json j = {{"scheme", to_string(a.scheme)}, {"players", a.players}, {"phi", a.phi},
                      {"v_empty", a.v_empty}, {"f_x", a.f_x}, {"method", a.method}};
  if (a.method == "sampled") {
    j["permutations"] = a.permutations;
    j["standard_error"] = a.standard_error;
  }
  return j;
}

nlohmann::json to_json(const GlobalImportance& g) { return {{"ranking", ranking_json(g.ranking)}}; }

nlohmann::json to_json(const TemporalImportance& t) {
  nlohmann::json curves = nlohmann::json::array();
  for (std::size_t f = 0; f < t.features.size(); ++f)
    curves.push_back({{"feature", t.features[f]}, {"mean_abs_phi", t.curve[f]},
                      {"peak_step", t.steps[t.peak_step(f)]}});
  return {{"steps", t.steps}, {"curves", curves}};
}

nlohmann::json to_json(const CohortReport& c) {
  return {{"split_feature", c.split_feature}, {"median", c.median},
          {"low", {{"size", c.low_size}, {"ranking", ranking_json(c.low)}}},
          {"high", {{"size", c.high_size}, {"ranking", ranking_json(c.high)}}}};
}

nlohmann::json to_json(const Waterfall& w) {
  nlohmann::json bars = nlohmann::json::array();
  for (const auto& b : w.bars)
    bars.push_back({{"player", b.player}, {"phi", b.phi}, {"cumulative", b.cumulative}});
  return {{"base", w.base}, {"f_x", w.f_x}, {"bars", bars}};
}

std::string beeswarm_csv(const GlobalImportance& g) {
  std::ostringstream os;
  os << "sample,player,phi,value\n";
  for (const auto& p : g.beeswarm)
    os << p.sample << ',' << p.player << ',' << format_double(p.phi) << ','
       << (p.value ? format_double(*p.value) : "NA") << '\n';
  return os.str();
}

std::string temporal_csv(const TemporalImportance& t) {
  std::ostringstream os;
  os << "feature,step,mean_abs_phi\n";
  for (std::size_t f = 0; f < t.features.size(); ++f)
    for (std::size_t s = 0; s < t.steps.size(); ++s)
      os << t.features[f] << ',' << t.steps[s] << ',' << format_double(t.curve[f][s]) << '\n';
  return os.str();
}

std::string waterfall_csv(const Waterfall& w) {
  std::ostringstream os;
  os << "rank,player,phi,cumulative\n";
  os << "0,base," << format_double(w.base) << ',' << format_double(w.base) << '\n';
  for (std::size_t i = 0; i < w.bars.size(); ++i)
    os << i + 1 << ',' << w.bars[i].player << ',' << format_double(w.bars[i].phi) << ','
       << format_double(w.bars[i].cumulative) << '\n';
  return os.str();
}

std::string attention_heatmap_csv(const AttentionSummary& a, const WindowTensor& windows) {
  std::ostringstream os;
  os << "sample,firm_id,label_year,step,alpha\n";
  const std::size_t l = a.alpha.shape()[1];
  for (std::size_t s = 0; s < windows.samples(); ++s)
    for (std::size_t t = 0; t < l; ++t)
      os << s << ',' << windows.firm_ids[s] << ',' << windows.label_years[s] << ','
         << step_name(t, l) << ',' << format_double(a.alpha[s * l + t]) << '\n';
  return os.str();
}

std::string attention_curves_csv(const AttentionSummary& a) {
  std::ostringstream os;
  os << "group,step,mean_alpha\n";
  auto emit = [&](const char* group, const std::vector<double>& m) {
    for (std::size_t t = 0; t < m.size(); ++t)
      os << group << ',' << step_name(t, m.size()) << ',' << format_double(m[t]) << '\n';
  };
  emit("predicted_positive", a.mean_predicted_positive);
  emit("predicted_negative", a.mean_predicted_negative);
  emit("label_positive", a.mean_label_positive);
  emit("label_negative", a.mean_label_negative);
  return os.str();
}

}  // namespace ews
