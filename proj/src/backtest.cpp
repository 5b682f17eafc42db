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

#include "ews/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "ews/errors.hpp"
#include "ews/io.hpp"
#include "ews/metrics.hpp"

namespace ews {

namespace {

double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ULL;
  return h;
}

std::string cell(const std::optional<double>& v) { return v ? format_double(*v) : "NA"; }

nlohmann::json json_or_null(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<Architecture> neural_arch(const std::string& name) {
  try {
    return architecture_from_string(name);
  } catch (const ConfigError&) {
    return std::nullopt;
  }
}

}  // namespace

nlohmann::json LogisticConfig::to_json() const {
  return {{"lambda", lambda}, {"learning_rate", learning_rate}, {"iterations", iterations},
          {"tolerance", tolerance}};
}

LogisticConfig LogisticConfig::from_json(const nlohmann::json& j) {
  LogisticConfig c;
  c.lambda = j.value("lambda", c.lambda);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.iterations = j.value("iterations", c.iterations);
  c.tolerance = j.value("tolerance", c.tolerance);
  if (!(c.lambda >= 0.0) || !(c.learning_rate > 0.0) || c.iterations == 0)
    throw ConfigError("invalid logistic configuration");
  return c;
}

std::vector<double> LogisticModel::predict(const WindowTensor& windows) const {
  const std::size_t d = windows.window_length() * windows.features();
  if (windows.samples() > 0 && d != weights.size())
    throw DimensionError("logistic: model has " + std::to_string(weights.size()) +
                         " weights, windows have " + std::to_string(d) + " cells");
  std::vector<double> out(windows.samples());
  for (std::size_t s = 0; s < out.size(); ++s) {
    const double* x = windows.x.data() + s * d;
    double z = intercept;
    for (std::size_t k = 0; k < d; ++k) z += weights[k] * x[k];
    out[s] = sigmoid(z);
  }
  return out;
}

LogisticModel fit_logistic(const WindowTensor& windows, const LogisticConfig& config) {
  const std::size_t n = windows.samples();
  if (n == 0) throw ConfigError("logistic: no training windows");
  const double prior = windows.positive_ratio();
  if (prior == 0.0 || prior == 1.0) throw ConfigError("logistic: single-class training set");
  const std::size_t d = windows.window_length() * windows.features();
  LogisticModel m;
  m.weights.assign(d, 0.0);
  std::vector<double> grad(d);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t it = 0; it < config.iterations; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double grad_b = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      const double* x = windows.x.data() + s * d;
      double z = m.intercept;
      for (std::size_t k = 0; k < d; ++k) z += m.weights[k] * x[k];
      const double r = (sigmoid(z) - windows.labels[s]) * inv_n;
      grad_b += r;
      for (std::size_t k = 0; k < d; ++k) grad[k] += r * x[k];
    }
    double largest = std::abs(grad_b);
    for (std::size_t k = 0; k < d; ++k) {
      grad[k] += 2.0 * config.lambda * m.weights[k];
      largest = std::max(largest, std::abs(grad[k]));
    }
    if (!std::isfinite(largest)) throw NumericError("logistic: non-finite gradient");
    if (largest < config.tolerance) break;
    m.intercept -= config.learning_rate * grad_b;
    for (std::size_t k = 0; k < d; ++k) m.weights[k] -= config.learning_rate * grad[k];
  }
  return m;
}

CellData prepare_cell(const PanelTable& panel, int test_year, int lead,
                      std::size_t window_length) {
  if (lead < 1) throw ConfigError("lead must be >= 1");
  PanelTable visible = restrict_years(panel, std::numeric_limits<int>::min(), test_year);
  for (auto& row : visible.rows)
    if (row.year == test_year)
      for (auto& v : row.features) v.reset();
  auto imputed = impute(visible);

  CellData cell;
  cell.test_year = test_year;
  cell.lead = lead;
  cell.dropped_firms = std::move(imputed.dropped_firms);
  const PanelTable fit_rows = restrict_years(imputed.panel, std::numeric_limits<int>::min(),
                                             test_year - 1 - lead);
  if (fit_rows.rows.empty())
    throw ConfigError("test year " + std::to_string(test_year) + " with lead " +
                      std::to_string(lead) + " has no training history");
  cell.standardizer = fit_standardizer(fit_rows);
  const auto windows = build_windows(cell.standardizer.apply(imputed.panel), window_length, lead);
  const int val_year = test_year - 1;
  cell.train = windows.filter([&](std::size_t i) { return windows.label_years[i] < val_year; });
  cell.validation =
      windows.filter([&](std::size_t i) { return windows.label_years[i] == val_year; });
  cell.test = windows.filter([&](std::size_t i) { return windows.label_years[i] == test_year; });
  if (cell.train.samples() == 0 || cell.validation.samples() == 0)
    throw ConfigError("test year " + std::to_string(test_year) + " with lead " +
                      std::to_string(lead) + " leaves an empty training or validation split");
  return cell;
}

Scorer neural_scorer(ModelConfig model, TrainConfig train_config) {
  return [model, train_config](const CellData& cell, std::uint64_t seed) {
    ModelConfig mc = model;
    mc.window_length = cell.train.window_length();
    mc.features = cell.train.features();
    TrainConfig tc = train_config;
    tc.seed = seed;
    auto result = train(cell.train, cell.validation, tc, mc);
    ScoredCell out;
    if (cell.test.samples() > 0) out.scores = predict(result.params, cell.test.x).probability;
    out.params = std::move(result.params);
    out.log = std::move(result.log);
    out.best_epoch = result.best_epoch;
    return out;
  };
}

Scorer logistic_scorer(LogisticConfig config) {
  return [config](const CellData& cell, std::uint64_t) {
    // Validation is only needed for early stopping, so it joins the fit.
    WindowTensor fit = cell.train;
    if (cell.validation.samples() > 0) {
      std::vector<double> data(fit.x.values().begin(), fit.x.values().end());
      data.insert(data.end(), cell.validation.x.values().begin(), cell.validation.x.values().end());
      for (std::size_t i = 0; i < cell.validation.samples(); ++i) {
        fit.labels.push_back(cell.validation.labels[i]);
        fit.firm_ids.push_back(cell.validation.firm_ids[i]);
        fit.label_years.push_back(cell.validation.label_years[i]);
        fit.end_years.push_back(cell.validation.end_years[i]);
      }
      fit.x = Tensor({fit.labels.size(), fit.length, fit.features()}, std::move(data));
    }
    ScoredCell out;
    out.scores = fit_logistic(fit, config).predict(cell.test);
    return out;
  };
}

Scorer external_scorer(const std::string& csv_path) {
  std::istringstream in(read_file(csv_path));
  std::string line;
  if (!std::getline(in, line)) throw DataError(csv_path + ": empty score file");
  std::map<std::pair<std::string, int>, double> table;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string firm, year, score;
    if (!std::getline(row, firm, ',') || !std::getline(row, year, ',') ||
        !std::getline(row, score, ','))
      throw DataError(csv_path + ": line " + std::to_string(line_no) + " needs firm_id,year,score");
    try {
      table[{firm, std::stoi(year)}] = std::stod(score);
    } catch (const std::exception&) {
      throw DataError(csv_path + ": line " + std::to_string(line_no) + " is malformed");
    }
  }
  return [table = std::move(table), csv_path](const CellData& cell, std::uint64_t) {
    ScoredCell out;
    for (std::size_t s = 0; s < cell.test.samples(); ++s) {
      const auto it = table.find({cell.test.firm_ids[s], cell.test.label_years[s]});
      if (it == table.end())
        throw DataError(csv_path + ": no score for " + cell.test.firm_ids[s] + " " +
                        std::to_string(cell.test.label_years[s]));
      out.scores.push_back(it->second);
    }
    return out;
  };
}

void BacktestConfig::validate() const {
  if (test_years.empty()) throw ConfigError("backtest: no test years");
  if (leads.empty()) throw ConfigError("backtest: no leads");
  for (int h : leads)
    if (h < 1) throw ConfigError("backtest: leads must be >= 1");
  if (models.empty()) throw ConfigError("backtest: empty model roster");
  std::set<std::string> seen;
  for (const auto& m : models) {
    if (!seen.insert(m).second) throw ConfigError("backtest: model '" + m + "' listed twice");
    if (m != "logistic" && !neural_arch(m) && !external.contains(m))
      throw ConfigError("backtest: unknown model '" + m + "'");
  }
  if (window_length < 1) throw ConfigError("backtest: window length must be >= 1");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("backtest: threshold must lie in (0, 1)");
  train.validate();
}

nlohmann::json BacktestConfig::to_json() const {
  return {{"test_years", test_years},
          {"leads", leads},
          {"models", models},
          {"external", external},
          {"window_length", window_length},
          {"threshold", threshold},
          {"seed", seed},
          {"train", train.to_json()},
          {"model", {{"conv_channels", model.conv_channels},
                     {"hidden", model.hidden},
                     {"attention", model.attention},
                     {"kernel_size", model.kernel_size},
                     {"blocks", model.blocks},
                     {"dropout", model.dropout}}},
          {"logistic", logistic.to_json()}};
}

BacktestConfig BacktestConfig::from_json(const nlohmann::json& j) {
  BacktestConfig c;
  c.test_years = j.value("test_years", c.test_years);
  c.leads = j.value("leads", c.leads);
  c.models = j.value("models", c.models);
  c.external = j.value("external", c.external);
  c.window_length = j.value("window_length", c.window_length);
  c.threshold = j.value("threshold", c.threshold);
  c.seed = j.value("seed", c.seed);
  if (j.contains("train")) c.train = TrainConfig::from_json(j.at("train"));
  if (j.contains("model")) {
    const auto& m = j.at("model");
    c.model.conv_channels = m.value("conv_channels", c.model.conv_channels);
    c.model.hidden = m.value("hidden", c.model.hidden);
    c.model.attention = m.value("attention", c.model.attention);
    c.model.kernel_size = m.value("kernel_size", c.model.kernel_size);
    c.model.blocks = m.value("blocks", c.model.blocks);
    c.model.dropout = m.value("dropout", c.model.dropout);
  }
  if (j.contains("logistic")) c.logistic = LogisticConfig::from_json(j.at("logistic"));
  c.validate();
  return c;
}

std::uint64_t cell_seed(std::uint64_t seed, int test_year, int lead, const std::string& model) {
  return mix_seed(mix_seed(mix_seed(seed, static_cast<std::uint64_t>(test_year)),
                           static_cast<std::uint64_t>(lead)),
                  name_hash(model));
}

BacktestReport run_backtest(const PanelTable& panel, const BacktestConfig& config,
                            const ProgressFn& progress) {
  config.validate();
  std::map<std::string, Scorer> scorers;
  for (const auto& name : config.models) {
    if (const auto arch = neural_arch(name)) {
      ModelConfig mc = config.model;
      mc.arch = *arch;
      TrainConfig tc = config.train;
      tc.threshold = config.threshold;
      scorers[name] = neural_scorer(mc, tc);
    } else if (name == "logistic") {
      scorers[name] = logistic_scorer(config.logistic);
    } else {
      scorers[name] = external_scorer(config.external.at(name));
    }
  }

  BacktestReport report;
  for (int year : config.test_years)
    for (int lead : config.leads) {
      const CellData data = prepare_cell(panel, year, lead, config.window_length);
      for (const auto& name : config.models) {
        CellResult r;
        r.test_year = year;
        r.lead = lead;
        r.model = name;
        r.samples = data.test.samples();
        r.train_samples = data.train.samples() + data.validation.samples();
        r.standardizer = data.standardizer;
        ScoredCell scored = scorers.at(name)(data, cell_seed(config.seed, year, lead, name));
        if (scored.scores.size() != data.test.samples())
          throw ContractError("scorer '" + name + "' returned the wrong number of scores");
        r.params = std::move(scored.params);
        r.log = std::move(scored.log);
        r.best_epoch = scored.best_epoch;
        if (r.samples > 0) {
          r.auc = try_roc_auc(scored.scores, data.test.labels);
          r.pr_auc = try_pr_auc(scored.scores, data.test.labels);
          r.f1 = f1_at_threshold(scored.scores, data.test.labels, config.threshold);
          r.positive_ratio = data.test.positive_ratio();
        }
        for (std::size_t s = 0; s < r.samples; ++s)
          r.scores.push_back({data.test.firm_ids[s], data.test.label_years[s], scored.scores[s],
                              data.test.labels[s]});
        if (progress)
          progress(std::to_string(year) + " h=" + std::to_string(lead) + " " + name +
                   " auc=" + cell(r.auc) + " pr_auc=" + cell(r.pr_auc) + " n=" +
                   std::to_string(r.samples));
        report.cells.push_back(std::move(r));
      }
    }
  return report;
}

std::string report_csv(const BacktestReport& report) {
  std::ostringstream os;
  os << "test_year,lead,model,auc,pr_auc,f1,positive_ratio,samples\n";
  for (const auto& c : report.cells)
    os << c.test_year << ',' << c.lead << ',' << c.model << ',' << cell(c.auc) << ','
       << cell(c.pr_auc) << ',' << cell(c.f1) << ',' << cell(c.positive_ratio) << ','
       << c.samples << '\n';
  return os.str();
}

nlohmann::json report_json(const BacktestReport& report, const BacktestConfig& config) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : report.cells) {
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : c.scores)
      samples.push_back({{"firm_id", s.firm_id}, {"year", s.year}, {"score", s.score},
                         {"label", s.label}});
    cells.push_back({{"test_year", c.test_year},
                     {"lead", c.lead},
                     {"model", c.model},
                     {"auc", json_or_null(c.auc)},
                     {"pr_auc", json_or_null(c.pr_auc)},
                     {"f1", json_or_null(c.f1)},
                     {"positive_ratio", json_or_null(c.positive_ratio)},
                     {"samples", c.samples},
                     {"train_samples", c.train_samples},
                     {"best_epoch", c.best_epoch},
                     {"scores", samples}});
  }
  return {{"format", "ews-backtest"}, {"version", 1}, {"config", config.to_json()},
          {"cells", cells}};
}

std::string curves_csv(const BacktestReport& report) {
  std::ostringstream os;
  os << "model,test_year,lead,curve,threshold,x,y\n";
  for (const auto& c : report.cells) {
    std::vector<double> s;
    std::vector<int> y;
    for (const auto& p : c.scores) {
      s.push_back(p.score);
      y.push_back(p.label);
    }
    auto emit = [&](const char* kind, const std::vector<CurvePoint>& pts) {
      for (const auto& p : pts)
        os << c.model << ',' << c.test_year << ',' << c.lead << ',' << kind << ','
           << (std::isinf(p.threshold) ? std::string("inf") : format_double(p.threshold)) << ','
           << format_double(p.x) << ',' << format_double(p.y) << '\n';
    };
    if (c.auc) emit("roc", roc_curve(s, y));
    if (c.pr_auc) emit("pr", pr_curve(s, y));
  }
  return os.str();
}

std::optional<double> mean_auc(const BacktestReport& report, const std::string& model, int lead) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& c : report.cells)
    if (c.model == model && c.lead == lead && c.auc) {
      sum += *c.auc;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::string decay_csv(const BacktestReport& report) {
  std::ostringstream os;
  os << "model,lead,test_year,auc,pr_auc\n";
  std::vector<std::string> models;
  std::set<int> leads;
  for (const auto& c : report.cells) {
    if (std::find(models.begin(), models.end(), c.model) == models.end())
      models.push_back(c.model);
    leads.insert(c.lead);
  }
  for (const auto& m : models)
    for (int h : leads) {
      double pr_sum = 0.0;
      std::size_t pr_n = 0;
      for (const auto& c : report.cells)
        if (c.model == m && c.lead == h) {
          os << m << ',' << h << ',' << c.test_year << ',' << cell(c.auc) << ','
             << cell(c.pr_auc) << '\n';
          if (c.pr_auc) {
            pr_sum += *c.pr_auc;
            ++pr_n;
          }
        }
      os << m << ',' << h << ",mean," << cell(mean_auc(report, m, h)) << ','
         << cell(pr_n ? std::optional<double>(pr_sum / static_cast<double>(pr_n)) : std::nullopt)
         << '\n';
    }
  return os.str();
}

}  // namespace ews
