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

#include "ews/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

#include "CLI11.hpp"

#include "ews/backtest.hpp"
#include "ews/errors.hpp"
#include "ews/explain.hpp"
#include "ews/io.hpp"
#include "ews/metrics.hpp"
#include "ews/synthetic.hpp"
#include "ews/training.hpp"

namespace ews {

namespace fs = std::filesystem;

nlohmann::json ExplainConfig::to_json() const {
  return {{"background", background},
          {"samples", samples},
          {"feature_permutations", feature_permutations},
          {"cell_permutations", cell_permutations},
          {"year", year ? nlohmann::json(*year) : nlohmann::json()},
          {"cohort_feature", cohort_feature},
          {"threshold", threshold},
          {"seed", seed}};
}

ExplainConfig ExplainConfig::from_json(const nlohmann::json& j) {
  ExplainConfig c;
  c.background = j.value("background", c.background);
  c.samples = j.value("samples", c.samples);
  c.feature_permutations = j.value("feature_permutations", c.feature_permutations);
  c.cell_permutations = j.value("cell_permutations", c.cell_permutations);
  if (j.contains("year") && !j.at("year").is_null()) c.year = j.at("year").get<int>();
  c.cohort_feature = j.value("cohort_feature", c.cohort_feature);
  c.threshold = j.value("threshold", c.threshold);
  c.seed = j.value("seed", c.seed);
  if (c.background == 0) throw ConfigError("explain.background must be positive");
  if (c.samples == 0) throw ConfigError("explain.samples must be positive");
  if (c.feature_permutations == 0 || c.cell_permutations == 0)
    throw ConfigError("explain permutation counts must be positive");
  return c;
}

WindowTensor checkpoint_windows(const PanelTable& panel, const nlohmann::json& extra) {
  if (!extra.is_object() || !extra.contains("standardizer"))
    throw DataError("checkpoint carries no standardizer");
  const auto standardizer = Standardizer::from_json(extra.at("standardizer"));
  const auto length = extra.at("window_length").get<std::size_t>();
  const int lead = extra.at("lead").get<int>();
  if (extra.contains("features") &&
      extra.at("features").get<std::vector<std::string>>() != panel.schema.feature_names())
    throw DataError("checkpoint features do not match the panel schema");
  return build_windows(standardizer.apply(impute(panel).panel), length, lead);
}

namespace {

struct RunConfig {
  std::string command;
  std::uint64_t seed = 0;
  int lead = 1;
  GenConfig gen = GenConfig::defaults();
  BacktestConfig backtest;
  ExplainConfig explain;

  std::string out = ".";
  std::string data;
  std::string checkpoint;
  std::vector<std::string> backtest_inputs;
  std::string explain_input;

  nlohmann::json to_json() const {
    nlohmann::json paths = {{"out", out}};
    if (!data.empty()) paths["data"] = data;
    if (!checkpoint.empty()) paths["checkpoint"] = checkpoint;
    if (!backtest_inputs.empty()) paths["backtest"] = backtest_inputs;
    if (!explain_input.empty()) paths["explain"] = explain_input;
    return {{"command", command}, {"seed", seed},          {"lead", lead},
            {"paths", paths},     {"gen", gen.to_json()},  {"backtest", backtest.to_json()},
            {"explain", explain.to_json()}};
  }
};

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string data;
  std::string checkpoint;
  std::optional<int> lead;
  std::string models;
  std::optional<double> threshold;
  std::vector<std::string> backtest;
  std::string explain;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError(what + " path is required");
  if (!fs::is_regular_file(path)) throw ConfigError(what + " not found: " + path);
}

RunConfig resolve(const std::string& command, const Flags& f) {
  RunConfig rc;
  rc.command = command;
  nlohmann::json file = nlohmann::json::object();
  if (!f.config.empty()) {
    require_file(f.config, "config");
    try {
      file = nlohmann::json::parse(read_file(f.config));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config " + f.config + ": " + e.what());
    }
    if (!file.is_object()) throw ConfigError("config must be a JSON object");
  }
  try {
    if (file.contains("gen")) rc.gen = GenConfig::from_json(file.at("gen"));
    if (file.contains("backtest")) rc.backtest = BacktestConfig::from_json(file.at("backtest"));
    if (file.contains("explain")) rc.explain = ExplainConfig::from_json(file.at("explain"));
    if (file.contains("seed")) {
      rc.seed = file.at("seed").get<std::uint64_t>();
    } else {
      rc.seed = rc.backtest.seed;
    }
    rc.lead = file.value("lead", rc.backtest.leads.front());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (f.seed) rc.seed = *f.seed;
  if (f.seed || file.contains("seed")) {
    rc.gen.seed = rc.seed;
    rc.backtest.seed = rc.seed;
    rc.backtest.train.seed = rc.seed;
    rc.explain.seed = rc.seed;
  }
  if (f.lead) {
    rc.lead = *f.lead;
    rc.backtest.leads = {*f.lead};
  }
  if (!f.models.empty()) rc.backtest.models = split_list(f.models);
  if (f.threshold) {
    rc.backtest.threshold = *f.threshold;
    rc.explain.threshold = *f.threshold;
  }
  if (!f.out.empty()) rc.out = f.out;
  rc.data = f.data;
  rc.checkpoint = f.checkpoint;
  rc.backtest_inputs = f.backtest;
  rc.explain_input = f.explain;
  if (rc.lead < 1) throw ConfigError("lead must be >= 1");
  rc.gen.validate();
  rc.backtest.validate();
  return rc;
}

class Writer {
 public:
  Writer(std::string dir, std::ostream& out) : dir_(std::move(dir)), out_(out) {
    fs::create_directories(dir_);
  }

  std::string path(const std::string& name) const { return (fs::path(dir_) / name).string(); }

  void write(const std::string& name, std::string_view content, const std::string& note = {}) {
    const auto p = path(name);
    fs::create_directories(fs::path(p).parent_path());
    write_file_atomic(p, content);
    announce(p, note);
  }
  void write_json(const std::string& name, const nlohmann::json& j,
                  const std::string& note = {}) {
    write(name, j.dump(2) + "\n", note);
  }
  void announce(const std::string& p, const std::string& note = {}) {
    out_ << "wrote " << p;
    if (!note.empty()) out_ << " (" << note << ")";
    out_ << "\n";
  }

 private:
  std::string dir_;
  std::ostream& out_;
};

std::string fixed(std::optional<double> v, int digits = 4) {
  if (!v) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, *v);
  return buf;
}

std::optional<double> opt_number(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

PanelTable load_data(const RunConfig& rc) {
  require_file(rc.data, "data");
  return load_panel(rc.data, PanelSchema::standard());
}

Architecture train_architecture(const RunConfig& rc) {
  for (const auto& m : rc.backtest.models) {
    if (m == "logistic" || rc.backtest.external.count(m)) continue;
    return architecture_from_string(m);
  }
  return Architecture::kTcnAttLstm;
}

int cmd_gen_data(const RunConfig& rc, std::ostream& out) {
  Writer w(rc.out, out);
  const auto g = generate(rc.gen);
  w.write_json("resolved_config.json", rc.to_json());
  w.write("panel.csv", panel_to_csv(g.panel),
          std::to_string(g.panel.rows.size()) + " rows");
  w.write_json("ground_truth.json", ground_truth(rc.gen));
  w.write_json("gen_config.json", rc.gen.to_json());
  std::ostringstream latent;
  latent << "firm_id,year,propensity,motive,trigger,interaction,debt\n";
  for (std::size_t r = 0; r < g.panel.rows.size(); ++r)
    latent << g.panel.rows[r].firm_id << ',' << g.panel.rows[r].year << ','
           << format_double(g.propensity[r]) << ',' << format_double(g.motive[r]) << ','
           << format_double(g.trigger[r]) << ',' << format_double(g.interaction[r]) << ','
           << format_double(g.debt[r]) << '\n';
  w.write("latent.csv", latent.str());
  return kExitOk;
}

int cmd_train(const RunConfig& rc, std::ostream& out) {
  const auto panel = load_data(rc);
  const auto years = panel.years();
  if (years.empty()) throw DataError("panel has no rows");
  // Everything observed is history: the next year plays the unseen test year.
  const int horizon = years.back() + 1;
  const auto& bt = rc.backtest;
  const auto cell = prepare_cell(panel, horizon, rc.lead, bt.window_length);

  ModelConfig mc = bt.model;
  mc.arch = train_architecture(rc);
  mc.window_length = bt.window_length;
  mc.features = cell.train.features();
  TrainConfig tc = bt.train;
  tc.seed = cell_seed(rc.seed, horizon, rc.lead, to_string(mc.arch));
  tc.threshold = bt.threshold;
  const auto result = train(cell.train, cell.validation, tc, mc);

  Writer w(rc.out, out);
  w.write_json("resolved_config.json", rc.to_json());
  nlohmann::json extra = {{"standardizer", cell.standardizer.to_json()},
                          {"lead", rc.lead},
                          {"window_length", bt.window_length},
                          {"features", cell.train.feature_names},
                          {"validation_year", horizon - 1},
                          {"best_epoch", result.best_epoch},
                          {"alpha", result.alpha}};
  const std::string ckpt = rc.checkpoint.empty() ? w.path("checkpoint.json") : rc.checkpoint;
  if (fs::path(ckpt).has_parent_path()) fs::create_directories(fs::path(ckpt).parent_path());
  save_checkpoint(ckpt, result.params, extra);
  const auto& best = result.log.at(result.best_epoch - 1);
  w.announce(ckpt, to_string(mc.arch) + ", best epoch " + std::to_string(result.best_epoch) +
                       ", val PR-AUC " + fixed(best.val_pr_auc));
  w.write("training_log.csv", training_log_csv(result.log));
  return kExitOk;
}

int cmd_backtest(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const auto panel = load_data(rc);
  for (const auto& [name, path] : rc.backtest.external) require_file(path, "external scores");
  const auto report = run_backtest(panel, rc.backtest,
                                   [&err](const std::string& m) { err << m << "\n"; });
  Writer w(rc.out, out);
  w.write_json("resolved_config.json", rc.to_json());
  w.write("backtest_report.csv", report_csv(report),
          std::to_string(report.cells.size()) + " cells");
  w.write_json("backtest_report.json", report_json(report, rc.backtest));
  w.write("curves.csv", curves_csv(report));
  w.write("lead_decay.csv", decay_csv(report));
  for (const auto& c : report.cells) {
    if (!c.params) continue;
    const nlohmann::json extra = {{"standardizer", c.standardizer.to_json()},
                                  {"lead", c.lead},
                                  {"window_length", rc.backtest.window_length},
                                  {"features", PanelSchema::standard().feature_names()},
                                  {"test_year", c.test_year},
                                  {"best_epoch", c.best_epoch}};
    const auto name = "checkpoints/" + c.model + "_" + std::to_string(c.test_year) + "_h" +
                      std::to_string(c.lead) + ".json";
    fs::create_directories(fs::path(w.path(name)).parent_path());
    save_checkpoint(w.path(name), *c.params, extra);
    w.announce(w.path(name));
  }
  return kExitOk;
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  if (k >= n) return all;
  std::vector<std::size_t> out;
  std::mt19937_64 rng(seed);
  std::sample(all.begin(), all.end(), std::back_inserter(out), k, rng);
  return out;
}

nlohmann::json ranking_json(const std::vector<RankedPlayer>& r) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& p : r)
    a.push_back({{"player", p.player}, {"mean_abs_phi", p.mean_abs_phi}, {"mean_phi", p.mean_phi}});
  return a;
}

int cmd_explain(const RunConfig& rc, std::ostream& out) {
  const auto panel = load_data(rc);
  require_file(rc.checkpoint, "checkpoint");
  const auto [params, extra] = load_checkpoint(rc.checkpoint);
  const auto windows = checkpoint_windows(panel, extra);
  if (windows.samples() == 0) throw DataError("panel yields no windows for this checkpoint");
  const auto& ex = rc.explain;
  const int year = ex.year ? *ex.year
                           : *std::max_element(windows.label_years.begin(),
                                               windows.label_years.end());
  const auto target = windows.filter([&](std::size_t i) { return windows.label_years[i] == year; });
  if (target.samples() == 0)
    throw ConfigError("no windows with label year " + std::to_string(year));
  auto history = windows.filter([&](std::size_t i) { return windows.label_years[i] < year; });
  const WindowTensor& pool = history.samples() > 0 ? history : windows;
  const auto picked = sample_indices(target.samples(), ex.samples, mix_seed(ex.seed, 2));
  const auto subset = target.select(picked);

  const ValueFunction vf{model_function(params),
                         select_background(pool, ex.background, mix_seed(ex.seed, 1))};
  const auto names = windows.feature_names;
  const std::size_t L = windows.window_length();
  const auto per_feature = make_players(PlayerScheme::kPerFeature, L, names);
  const auto per_cell = make_players(PlayerScheme::kPerCell, L, names);

  Writer w(rc.out, out);
  w.write_json("resolved_config.json", rc.to_json());
  nlohmann::json summary = {{"format", "ews-explain"},
                            {"version", 1},
                            {"checkpoint", rc.checkpoint},
                            {"architecture", to_string(params.config.arch)},
                            {"label_year", year},
                            {"samples", subset.samples()},
                            {"background", vf.background_size()}};

  if (params.config.has_attention()) {
    const auto att = extract_attention(params, target, ex.threshold);
    w.write("attention_heatmap.csv", attention_heatmap_csv(att, target));
    w.write("attention_curves.csv", attention_curves_csv(att));
    std::vector<double> first, last;
    for (std::size_t s = 0; s < target.samples(); ++s) {
      if (target.labels[s] != 1) continue;
      first.push_back(att.alpha.values()[s * L]);
      last.push_back(att.alpha.values()[s * L + L - 1]);
    }
    nlohmann::json welch = nullptr;
    if (first.size() >= 2) {
      const auto t = welch_t_test(last, first);
      welch = {{"t", t.t}, {"df", t.df}, {"p_two_sided", t.p_two_sided},
               {"p_greater", t.p_greater}, {"n", first.size()}};
    }
    summary["attention"] = {{"label_positive", att.mean_label_positive},
                            {"label_negative", att.mean_label_negative},
                            {"predicted_positive", att.mean_predicted_positive},
                            {"predicted_negative", att.mean_predicted_negative},
                            {"welch_last_vs_first", welch}};
  } else {
    summary["attention"] = nullptr;
  }

  const auto feat_attr = explain_windows(vf, subset, per_feature, ex.feature_permutations,
                                         mix_seed(ex.seed, 3));
  const auto global = aggregate_global(feat_attr, &subset);
  w.write_json("global_importance.json", to_json(global));
  w.write("beeswarm.csv", beeswarm_csv(global));
  summary["global_ranking"] = ranking_json(global.ranking);

  try {
    const auto cohort = cohort_analysis(subset, feat_attr, ex.cohort_feature);
    w.write_json("cohort.json", to_json(cohort));
    summary["cohort"] = {{"split_feature", cohort.split_feature},
                         {"median", cohort.median},
                         {"low", ranking_json(cohort.low)},
                         {"high", ranking_json(cohort.high)}};
  } catch (const DataError& e) {
    summary["cohort"] = {{"error", e.what()}};
  }

  const auto cell_attr = explain_windows(vf, subset, per_cell, ex.cell_permutations,
                                         mix_seed(ex.seed, 4));
  const auto temporal = aggregate_temporal(cell_attr, per_cell);
  w.write("temporal.csv", temporal_csv(temporal));
  nlohmann::json peaks = nlohmann::json::object();
  for (std::size_t f = 0; f < temporal.features.size(); ++f)
    peaks[temporal.features[f]] = {{"peak", temporal.steps[temporal.peak_step(f)]},
                                   {"range", temporal.range(f)}};
  summary["temporal"] = {{"steps", temporal.steps}, {"features", peaks}};

  const auto probs = vf.model(subset.x);
  const auto top = static_cast<std::size_t>(
      std::max_element(probs.begin(), probs.end()) - probs.begin());
  const std::size_t cells = L * windows.features();
  Tensor x({L, windows.features()}, std::vector<double>(subset.x.data() + top * cells,
                                                       subset.x.data() + (top + 1) * cells));
  const auto local = exact_shapley(vf, x, per_feature);
  const auto fall = waterfall_report(local);
  w.write("waterfall.csv", waterfall_csv(fall));
  summary["waterfall"] = {{"firm_id", subset.firm_ids[top]},
                          {"label_year", subset.label_years[top]},
                          {"label", subset.labels[top]},
                          {"record", to_json(fall)}};
  w.write_json("explain_summary.json", summary);
  return kExitOk;
}

nlohmann::json load_json_input(const std::string& path, const std::string& what) {
  require_file(path, what);
  const auto text = read_file(path);
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return nullptr;
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(what + " " + path + ": " + e.what());
  }
}

void require_format(const nlohmann::json& j, const std::string& format, const std::string& path) {
  if (!j.is_object() || j.value("format", "") != format || j.value("version", 0) != 1)
    throw ConfigError("schema mismatch: " + path + " is not a " + format + " v1 document");
}

int cmd_report(const RunConfig& rc, std::ostream& out) {
  if (rc.backtest_inputs.empty()) throw ConfigError("report needs --backtest");
  // Key order gives the table its row order.
  std::vector<std::string> models;
  std::set<int> years, leads;
  std::map<std::tuple<int, int, std::string>, nlohmann::json> cells;
  for (const auto& path : rc.backtest_inputs) {
    const auto j = load_json_input(path, "backtest report");
    require_format(j, "ews-backtest", path);
    for (const auto& c : j.at("cells")) {
      const auto model = c.at("model").get<std::string>();
      if (std::find(models.begin(), models.end(), model) == models.end()) models.push_back(model);
      const int year = c.at("test_year"), lead = c.at("lead");
      years.insert(year);
      leads.insert(lead);
      nlohmann::json row = {{"test_year", year},
                            {"lead", lead},
                            {"model", model},
                            {"auc", c.at("auc")},
                            {"pr_auc", c.at("pr_auc")},
                            {"f1", c.at("f1")},
                            {"positive_ratio", c.at("positive_ratio")},
                            {"samples", c.at("samples")}};
      if (!cells.emplace(std::make_tuple(year, lead, model), row).second)
        throw ConfigError("duplicate cell " + model + " " + std::to_string(year) + " lead " +
                          std::to_string(lead) + " in " + path);
    }
  }

  nlohmann::json rows = nlohmann::json::array();
  nlohmann::json means = nlohmann::json::object();
  std::ostringstream txt;
  txt << "Predictive performance by test year\n";
  int panel = 0;
  for (const int year : years) {
    txt << "\nPanel " << static_cast<char>('A' + panel % 26) << ": test year " << year << "\n";
    ++panel;
    char head[128];
    std::snprintf(head, sizeof head, "%-16s %4s %8s %8s %8s %9s %8s\n", "model", "lead", "AUC",
                  "PR-AUC", "F1", "pos.rate", "samples");
    txt << head;
    for (const int lead : leads) {
      for (const auto& model : models) {
        const auto it = cells.find({year, lead, model});
        char line[160];
        if (it == cells.end()) {
          rows.push_back({{"test_year", year}, {"lead", lead}, {"model", model},
                          {"status", "missing"}});
          std::snprintf(line, sizeof line, "%-16s %4d %8s\n", model.c_str(), lead, "missing");
        } else {
          const auto& c = it->second;
          rows.push_back(c);
          std::snprintf(line, sizeof line, "%-16s %4d %8s %8s %8s %9s %8zu\n", model.c_str(), lead,
                        fixed(opt_number(c, "auc")).c_str(), fixed(opt_number(c, "pr_auc")).c_str(),
                        fixed(opt_number(c, "f1")).c_str(),
                        fixed(opt_number(c, "positive_ratio")).c_str(),
                        c.at("samples").get<std::size_t>());
        }
        txt << line;
      }
    }
  }
  txt << "\nMean AUC over test years\n";
  for (const int lead : leads) {
    for (const auto& model : models) {
      double sum = 0.0;
      std::size_t n = 0;
      for (const int year : years) {
        const auto it = cells.find({year, lead, model});
        if (it == cells.end()) continue;
        if (const auto a = opt_number(it->second, "auc")) {
          sum += *a;
          ++n;
        }
      }
      const std::optional<double> m = n ? std::optional<double>(sum / static_cast<double>(n))
                                        : std::nullopt;
      means[model][std::to_string(lead)] = m ? nlohmann::json(*m) : nlohmann::json();
      char line[96];
      std::snprintf(line, sizeof line, "%-16s %4d %8s\n", model.c_str(), lead, fixed(m).c_str());
      txt << line;
    }
  }

  nlohmann::json summary = {{"format", "ews-summary"},
                            {"version", 1},
                            {"backtest", {{"models", models},
                                          {"test_years", years},
                                          {"leads", leads},
                                          {"cells", rows},
                                          {"mean_auc", means}}}};
  if (!rc.explain_input.empty()) {
    const auto j = load_json_input(rc.explain_input, "explain summary");
    const bool empty = j.is_null() || (j.is_object() && j.empty());
    if (!empty) {
      require_format(j, "ews-explain", rc.explain_input);
      summary["explain"] = j;
      txt << "\nGlobal attribution, label year " << j.value("label_year", 0) << "\n";
      for (const auto& p : j.at("global_ranking")) {
        char line[96];
        std::snprintf(line, sizeof line, "%-28s %10.6f\n",
                      p.at("player").get<std::string>().c_str(),
                      p.at("mean_abs_phi").get<double>());
        txt << line;
      }
    }
  }

  Writer w(rc.out, out);
  w.write_json("resolved_config.json", rc.to_json());
  w.write_json("summary.json", summary);
  w.write("summary.txt", txt.str());
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Share-repurchase early-warning pipeline", "ews"};
  app.require_subcommand(1, 1);
  Flags f;
  auto add_common = [&f](CLI::App* sub) {
    sub->add_option("--config", f.config, "JSON config with gen/backtest/explain sections");
    sub->add_option("--seed", f.seed, "Global seed");
    sub->add_option("--out", f.out, "Output directory");
  };
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic panel");
  add_common(gen);
  auto* tr = app.add_subcommand("train", "Train one model on every labelled year");
  add_common(tr);
  tr->add_option("--data", f.data, "Panel CSV");
  tr->add_option("--checkpoint", f.checkpoint, "Checkpoint output path");
  tr->add_option("--lead", f.lead, "Prediction lead in years")->check(CLI::Range(1, 3));
  tr->add_option("--models", f.models, "Architecture to train");
  tr->add_option("--threshold", f.threshold, "Decision threshold")->check(CLI::Range(0.0, 1.0));
  auto* bt = app.add_subcommand("backtest", "Walk-forward evaluation");
  add_common(bt);
  bt->add_option("--data", f.data, "Panel CSV");
  bt->add_option("--lead", f.lead, "Prediction lead in years")->check(CLI::Range(1, 3));
  bt->add_option("--models", f.models, "Comma-separated model roster");
  bt->add_option("--threshold", f.threshold, "Decision threshold")->check(CLI::Range(0.0, 1.0));
  auto* ex = app.add_subcommand("explain", "Attention and Shapley attributions");
  add_common(ex);
  ex->add_option("--data", f.data, "Panel CSV");
  ex->add_option("--checkpoint", f.checkpoint, "Trained checkpoint");
  ex->add_option("--threshold", f.threshold, "Decision threshold")->check(CLI::Range(0.0, 1.0));
  auto* rp = app.add_subcommand("report", "Merge backtest and explain outputs");
  add_common(rp);
  rp->add_option("--backtest", f.backtest, "backtest_report.json (repeatable)");
  rp->add_option("--explain", f.explain, "explain_summary.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  const auto* sub = app.get_subcommands().front();
  try {
    const auto rc = resolve(sub->get_name(), f);
    if (sub == gen) return cmd_gen_data(rc, out);
    if (sub == tr) return cmd_train(rc, out);
    if (sub == bt) return cmd_backtest(rc, out, err);
    if (sub == ex) return cmd_explain(rc, out);
    return cmd_report(rc, out);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace ews
