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

// Acceptance gate: one PASS/FAIL line per criterion. Exit status is zero
// only when every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ews/autodiff.hpp"
#include "ews/backtest.hpp"
#include "ews/cli.hpp"
#include "ews/explain.hpp"
#include "ews/grad_check.hpp"
#include "ews/io.hpp"
#include "ews/metrics.hpp"
#include "ews/model.hpp"
#include "ews/synthetic.hpp"
#include "ews/training.hpp"

namespace ews {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;
using layers::Sequence;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = u(rng);
  return t;
}

// Random projection of a sequence to a scalar, so no output cancels out.
ad::Var project(ad::Tape& tape, const Sequence& seq, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ad::Var total = tape.constant(Tensor::scalar(0.0));
  for (const auto& v : seq) total = total + ad::sum(ad::mul(v, tape.constant(random_tensor(v.shape(), rng))));
  return total;
}

Sequence constant_sequence(ad::Tape& tape, const std::vector<Tensor>& steps) {
  Sequence s;
  for (const auto& t : steps) s.push_back(tape.constant(t));
  return s;
}

// ---- 1: gradients ---------------------------------------------------------

Outcome criterion_gradients() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::map<std::string, double> worst;
  auto record = [&](const std::string& name, double err) {
    worst[name] = std::max(worst[name], err);
  };
  const std::size_t B = 2, L = 4, C = 3, K = 2;
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<Tensor> xs;
    for (std::size_t t = 0; t < L; ++t) xs.push_back(random_tensor({B, C}, rng));

    record("dilated_conv", grad_check(
        [&](ad::Tape& tape, std::span<const ad::Var> p) {
          return project(tape, layers::dilated_causal_conv(constant_sequence(tape, xs), p[0], K, 2), 1);
        },
        {random_tensor({K * C, 4}, rng)}));

    record("residual_block", grad_check(
        [&](ad::Tape& tape, std::span<const ad::Var> p) {
          ResidualBlock<ad::Var> blk;
          blk.dilation = 2;
          blk.conv1 = {p[0], p[1]};
          blk.conv2 = {p[2], p[3]};
          blk.projection = p[4];
          return project(tape, layers::residual_block(constant_sequence(tape, xs), blk, K), 2);
        },
        {random_tensor({K * C, 5}, rng), random_tensor({5}, rng), random_tensor({K * 5, 5}, rng),
         random_tensor({5}, rng), random_tensor({C, 5}, rng)}));

    const std::size_t dh = 4;
    const Tensor h0 = random_tensor({B, dh}, rng), c0 = random_tensor({B, dh}, rng);
    record("lstm_step", grad_check(
        [&](ad::Tape& tape, std::span<const ad::Var> p) {
          const auto s = layers::lstm_step(p[2], {p[3], p[4]}, {p[0], p[1]});
          return project(tape, {s.h, s.c}, 3);
        },
        {random_tensor({4 * dh, dh + C}, rng), random_tensor({4 * dh}, rng), xs[0], h0, c0}));

    std::vector<Tensor> hs;
    for (std::size_t t = 0; t < L; ++t) hs.push_back(random_tensor({B, dh}, rng));
    record("attention", grad_check(
        [&](ad::Tape& tape, std::span<const ad::Var> p) {
          Sequence h(p.begin() + 5, p.end());
          const auto pooled = layers::attention_pool(h, {p[0], p[1], p[2], p[3], p[4]});
          return project(tape, {pooled.context, pooled.weights}, 4);
        },
        [&] {
          std::vector<Tensor> g{random_tensor({3, dh}, rng), random_tensor({3, 3}, rng),
                                random_tensor({3}, rng), random_tensor({3}, rng),
                                random_tensor({3}, rng)};
          g.insert(g.end(), hs.begin(), hs.end());
          return g;
        }()));

    record("head", grad_check(
        [&](ad::Tape&, std::span<const ad::Var> p) {
          return ad::sum(ad::log(ad::sigmoid(ad::matmul_nt(p[2], p[0]) + p[1])));
        },
        {random_tensor({1, dh}, rng), random_tensor({1}, rng), random_tensor({B, dh}, rng)}));

    const std::vector<int> y{1, 0, 0, 1, 0};
    Tensor p({5, 1});
    std::uniform_real_distribution<double> u(0.05, 0.95);
    for (double& v : p.values()) v = u(rng);
    for (double gamma : {0.0, 1.0, 2.0})
      record("focal_loss", grad_check(
          [&](ad::Tape&, ad::Var v) { return focal_loss(v, y, 0.3, gamma); }, p));
  }

  for (auto arch : {Architecture::kTcnAttLstm, Architecture::kTcnOnly, Architecture::kLstmOnly}) {
    ModelConfig c;
    c.arch = arch;
    c.features = 4;
    c.conv_channels = 3;
    c.hidden = 3;
    c.attention = 2;
    c.dropout = 0.0;
    const ModelParams params = init_params(c, 7);
    const Tensor x = random_tensor({3, 3, 4}, rng, 1.5);
    const std::vector<int> labels{1, 0, 1};
    std::vector<Tensor> groups;
    for (const Tensor* t : params.arrays()) groups.push_back(*t);
    record("model_" + to_string(arch), grad_check(
        [&](ad::Tape& tape, std::span<const ad::Var> leaves) {
          std::size_t i = 0;
          const auto net = params.weights.map<ad::Var>(
              [&](const std::string&, const Tensor&) { return leaves[i++]; });
          const auto pass = forward(tape, net, c, x, Mode::kEval);
          ad::Var reg = tape.constant(Tensor::scalar(0.0));
          for (const auto& leaf : leaves) reg = reg + ad::sum_squares(leaf);
          return focal_loss(pass.probability, labels, 0.25, 2.0) + ad::scale(reg, 1e-3);
        },
        groups));
  }

  double max_err = 0.0;
  std::string which;
  for (const auto& [name, e] : worst)
    if (e >= max_err) {
      max_err = e;
      which = name;
    }
  const double secs = seconds_since(t0);
  return {max_err < 1e-4 && secs < 60.0,
          std::to_string(worst.size()) + " checks, max rel error " + fmt("%.2e", max_err) +
              " (" + which + "), " + fmt("%.1f", secs) + " s"};
}

// ---- 2: causality ---------------------------------------------------------

Outcome criterion_causality() {
  std::mt19937_64 rng(202);
  std::size_t cases = 0, violations = 0;
  for (int trial = 0; trial < 150; ++trial) {
    ModelConfig c;
    c.window_length = 3 + rng() % 6;
    c.features = 2 + rng() % 5;
    c.kernel_size = 2 + rng() % 2;
    c.blocks = 1 + rng() % 3;
    c.conv_channels = 2 + rng() % 6;
    const ModelParams params = init_params(c, rng());
    const std::size_t L = c.window_length, F = c.features;
    const Tensor x = random_tensor({2, L, F}, rng, 2.0);
    const std::size_t t = rng() % (L - 1);
    Tensor y = x;
    std::normal_distribution<double> g;
    for (std::size_t s = 0; s < 2; ++s)
      for (std::size_t step = t + 1; step < L; ++step)
        for (std::size_t f = 0; f < F; ++f) y[(s * L + step) * F + f] += 3.0 * g(rng);
    auto tcn = [&](const Tensor& in) {
      ad::Tape tape(false);
      const auto net = bind(tape, params);
      Sequence seq = layers::split_steps(tape, in);
      for (const auto& blk : net.tcn) seq = layers::residual_block(seq, blk, c.kernel_size);
      std::vector<Tensor> out;
      for (const auto& v : seq) out.push_back(v.value());
      return out;
    };
    const auto a = tcn(x), b = tcn(y);
    ++cases;
    bool ok = true;
    for (std::size_t step = 0; step <= t; ++step) ok = ok && a[step] == b[step];
    // The perturbation must reach later steps, otherwise the test is vacuous.
    bool moved = false;
    for (std::size_t step = t + 1; step < L; ++step) moved = moved || !(a[step] == b[step]);
    if (!ok || !moved) ++violations;
  }
  return {cases >= 100 && violations == 0,
          std::to_string(cases) + " random cases, " + std::to_string(violations) + " violations"};
}

// ---- 3: attention normalisation ------------------------------------------

Outcome criterion_attention_sum() {
  std::mt19937_64 rng(303);
  double worst = 0.0;
  std::size_t draws = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t L = 2 + rng() % 8, dh = 1 + rng() % 8, da = 1 + rng() % 8, B = 1 + rng() % 4;
    const double scale = std::pow(10.0, static_cast<double>(rng() % 4) - 1.0);
    ad::Tape tape(false);
    Sequence h;
    for (std::size_t t = 0; t < L; ++t) h.push_back(tape.constant(random_tensor({B, dh}, rng, scale)));
    const AttentionWeights<ad::Var> w{tape.constant(random_tensor({da, dh}, rng, scale)),
                                      tape.constant(random_tensor({da, da}, rng, scale)),
                                      tape.constant(random_tensor({da}, rng, scale)),
                                      tape.constant(random_tensor({da}, rng, scale)),
                                      tape.constant(random_tensor({da}, rng, scale))};
    const Tensor a = layers::attention_pool(h, w).weights.value();
    for (std::size_t r = 0; r < B; ++r) {
      double s = 0.0;
      for (std::size_t t = 0; t < L; ++t) s += a.at(r, t);
      worst = std::max(worst, std::abs(s - 1.0));
    }
    ++draws;
  }
  return {draws >= 1000 && worst <= 1e-9,
          std::to_string(draws) + " parameterisations, max |sum - 1| " + fmt("%.2e", worst)};
}

// ---- 4: focal loss degeneracy --------------------------------------------

Outcome criterion_focal_degeneracy() {
  double worst = 0.0;
  std::size_t points = 0;
  ModelParams params = init_params(ModelConfig{}, 1);
  for (int i = 1; i < 100; ++i) {
    const double p = i / 100.0;
    for (int y : {0, 1}) {
      const double bce = -(y * std::log(p) + (1 - y) * std::log(1.0 - p));
      const std::vector<double> ps{p};
      const std::vector<int> ys{y};
      worst = std::max(worst, std::abs(focal_loss(ps, ys, 0.5, 0.0) - 0.5 * bce));
      worst = std::max(worst, std::abs(focal_loss(ps, ys, 0.5, 0.0, 0.0, params) - 0.5 * bce));
      ++points;
    }
  }
  return {worst <= 1e-12, std::to_string(points) + " (p, y) pairs, max deviation " +
                              fmt("%.2e", worst)};
}

// ---- 5: Shapley axioms ----------------------------------------------------

BatchModel toy_model(const std::vector<double>& w) {
  // Symmetric in cells 0 and 1, cell 2 is a dummy, interaction between 3 and 4.
  return [w](const Tensor& x) {
    const std::size_t n = x.shape()[0], d = w.size();
    std::vector<double> out(n);
    for (std::size_t s = 0; s < n; ++s) {
      const double* r = x.data() + s * d;
      double z = r[0] + r[1] + r[0] * r[1] + (d > 4 ? 0.5 * r[3] * r[4] : 0.0);
      for (std::size_t k = 3; k < d; ++k) z += w[k] * r[k];
      out[s] = 1.0 / (1.0 + std::exp(-z));
    }
    return out;
  };
}

Outcome criterion_shapley() {
  std::mt19937_64 rng(505);
  std::normal_distribution<double> g;
  double local = 0.0, dummy = 0.0, symmetry = 0.0, linear = 0.0, worst_z = 0.0;
  std::size_t players_checked = 0;
  for (std::size_t m : {4u, 7u, 10u}) {
    std::vector<std::string> names;
    for (std::size_t f = 0; f < m; ++f) names.push_back("x" + std::to_string(f));
    const auto players = make_players(PlayerScheme::kPerFeature, 1, names);
    Tensor bg({32, 1, m});
    for (std::size_t s = 0; s < 32; ++s)
      for (std::size_t f = 0; f < m; ++f) bg[s * m + f] = g(rng);
    for (std::size_t s = 0; s < 32; ++s) bg[s * m + 1] = bg[s * m];  // symmetric columns
    std::vector<double> w(m);
    for (double& v : w) v = g(rng);
    Tensor x({1, m});
    for (std::size_t f = 0; f < m; ++f) x[f] = g(rng);
    x[1] = x[0];

    const ValueFunction vf{toy_model(w), bg};
    const auto exact = exact_shapley(vf, x, players);
    double total = 0.0;
    for (double p : exact.phi) total += p;
    local = std::max(local, std::abs(total - (exact.f_x - exact.v_empty)));
    symmetry = std::max(symmetry, std::abs(exact.phi[0] - exact.phi[1]));
    dummy = std::max(dummy, std::abs(exact.phi[2]));

    const auto sampled = sampled_shapley(vf, x, players, 4000, 77 + m);
    for (std::size_t j = 0; j < m; ++j) {
      const double diff = std::abs(sampled.phi[j] - exact.phi[j]);
      const double se = sampled.standard_error[j];
      worst_z = std::max(worst_z, se > 0.0 ? diff / se : (diff > 1e-12 ? 1e9 : 0.0));
      ++players_checked;
    }

    // Linear model: phi_j = w_j (x_j - mean_j).
    std::vector<double> wl(m);
    for (double& v : wl) v = g(rng);
    const ValueFunction lin{[wl](const Tensor& t) {
                              const std::size_t n = t.shape()[0], d = wl.size();
                              std::vector<double> out(n, 0.0);
                              for (std::size_t s = 0; s < n; ++s)
                                for (std::size_t k = 0; k < d; ++k) out[s] += wl[k] * t[s * d + k];
                              return out;
                            },
                            bg};
    const auto lphi = exact_shapley(lin, x, players);
    for (std::size_t j = 0; j < m; ++j) {
      double mu = 0.0;
      for (std::size_t s = 0; s < 32; ++s) mu += bg[s * m + j];
      mu /= 32.0;
      linear = std::max(linear, std::abs(lphi.phi[j] - wl[j] * (x[j] - mu)));
    }
  }
  const bool pass = local <= 1e-6 && dummy <= 1e-9 && symmetry <= 1e-9 && linear <= 1e-9 &&
                    worst_z <= 3.0;
  return {pass, "local " + fmt("%.1e", local) + ", dummy " + fmt("%.1e", dummy) + ", symmetry " +
                    fmt("%.1e", symmetry) + ", linear " + fmt("%.1e", linear) +
                    ", sampled max |z| " + fmt("%.2f", worst_z) + " over " +
                    std::to_string(players_checked) + " players"};
}

// ---- 6: metric oracles ----------------------------------------------------

double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double num = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1.0;
        num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return num / pairs;
}

// Average precision for distinct scores: mean precision at each positive's rank.
double ranked_ap(const std::vector<double>& s, const std::vector<int>& y) {
  std::vector<std::size_t> order(s.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return s[a] > s[b]; });
  double hits = 0.0, sum = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k)
    if (y[order[k]] == 1) {
      hits += 1.0;
      sum += hits / static_cast<double>(k + 1);
    }
  return sum / hits;
}

Outcome criterion_metrics() {
  std::mt19937_64 rng(606);
  double auc_err = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 200;
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % 25) / 5.0;  // many ties
      y[i] = static_cast<int>(rng() % 2);
    }
    y[0] = 1;
    y[1] = 0;
    auc_err = std::max(auc_err, std::abs(roc_auc(s, y) - pairwise_auc(s, y)));
  }
  double ap_err = 0.0;
  std::size_t cases = 0;
  for (std::size_t n = 1; n <= 8; ++n)
    for (unsigned mask = 1; mask < (1u << n); ++mask) {
      std::vector<double> s(n);
      std::vector<int> y(n);
      for (std::size_t i = 0; i < n; ++i) {
        s[i] = 1.0 - static_cast<double>(i) / static_cast<double>(n);
        y[i] = (mask >> i) & 1u;
      }
      ap_err = std::max(ap_err, std::abs(pr_auc(s, y) - ranked_ap(s, y)));
      ++cases;
    }
  // Hand-computed: ranks 1 and 3 positive gives (1 + 2/3) / 2; a full tie is the prior.
  ap_err = std::max(ap_err, std::abs(pr_auc(std::vector<double>{0.9, 0.8, 0.7, 0.6},
                                            std::vector<int>{1, 0, 1, 0}) - 5.0 / 6.0));
  ap_err = std::max(ap_err, std::abs(pr_auc(std::vector<double>{0.5, 0.5, 0.5},
                                            std::vector<int>{1, 0, 0}) - 1.0 / 3.0));
  return {auc_err <= 1e-12 && ap_err <= 1e-12,
          "roc_auc vs pairwise on 100 instances " + fmt("%.1e", auc_err) + ", pr_auc on " +
              std::to_string(cases + 2) + " enumerated cases " + fmt("%.1e", ap_err)};
}

// ---- 7: leakage -----------------------------------------------------------

Outcome criterion_leakage() {
  GenConfig g = GenConfig::defaults();
  g.n_firms = 400;
  g.seed = 707;
  const PanelTable panel = generate(g).panel;
  PanelTable mutated = panel;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> noise(0.0, 50.0);
  const int T = 2023;
  for (auto& row : mutated.rows) {
    if (row.year != T) continue;
    for (auto& v : row.features)
      if (v) v = *v + noise(rng);
    row.label = 1 - row.label;
  }
  ModelConfig mc;
  mc.conv_channels = 6;
  mc.hidden = 6;
  mc.attention = 4;
  TrainConfig tc;
  tc.max_epochs = 3;
  tc.seed = 9;
  bool same = true;
  std::string what;
  for (int lead : {1, 2}) {
    const auto a = prepare_cell(panel, T, lead, 3), b = prepare_cell(mutated, T, lead, 3);
    auto check = [&](bool ok, const std::string& name) {
      if (!ok && what.empty()) what = name + " (lead " + std::to_string(lead) + ")";
      same = same && ok;
    };
    check(a.standardizer == b.standardizer, "standardizer");
    check(a.train == b.train, "training windows");
    check(a.validation == b.validation, "validation windows");
    mc.window_length = 3;
    mc.features = a.train.features();
    check(train(a.train, a.validation, tc, mc).params ==
              train(b.train, b.validation, tc, mc).params,
          "trained parameters");
    const auto la = fit_logistic(a.train, LogisticConfig{}), lb = fit_logistic(b.train, LogisticConfig{});
    check(la.weights == lb.weights && la.intercept == lb.intercept, "logistic parameters");
    check(!(a.test == b.test), "test windows unchanged by mutation");
  }
  return {same, same ? "standardizer, windows and parameters bit-identical for leads 1-2 after "
                       "mutating every " + std::to_string(T) + " row"
                     : "differs: " + what};
}

// ---- 8-10: default synthetic data ----------------------------------------

struct Heavy {
  PanelTable panel;
  BacktestConfig config;
  BacktestReport lead1;
  double lead1_seconds = 0.0;
};

BacktestConfig heavy_config(std::size_t epochs) {
  BacktestConfig c;
  c.seed = 20240607;
  c.train.max_epochs = epochs;
  return c;
}

Outcome criterion_ordering(const Heavy& h) {
  const std::string main = "tcn_att_lstm";
  bool pass = h.lead1_seconds < 900.0;
  std::ostringstream detail;
  detail << "main - logistic:";
  for (int year : h.config.test_years) {
    std::optional<double> m, l;
    for (const auto& c : h.lead1.cells) {
      if (c.test_year != year) continue;
      if (c.model == main) m = c.auc;
      if (c.model == "logistic") l = c.auc;
    }
    const double gap = (m && l) ? *m - *l : -1.0;
    pass = pass && gap >= 0.05;
    detail << " " << year << " " << fmt("%+.3f", gap);
  }
  const auto mm = mean_auc(h.lead1, main, 1), ml = mean_auc(h.lead1, "lstm", 1),
             mt = mean_auc(h.lead1, "tcn", 1), mlog = mean_auc(h.lead1, "logistic", 1);
  pass = pass && mm && ml && mt && *mm > *ml && *mm > *mt;
  detail << "; mean AUC main " << fmt("%.4f", mm.value_or(NAN)) << " lstm "
         << fmt("%.4f", ml.value_or(NAN)) << " tcn " << fmt("%.4f", mt.value_or(NAN))
         << " logistic " << fmt("%.4f", mlog.value_or(NAN)) << "; "
         << fmt("%.0f", h.lead1_seconds) << " s";
  return {pass, detail.str()};
}

Outcome criterion_decay(const Heavy& h) {
  BacktestConfig c = h.config;
  c.models = {"tcn_att_lstm"};
  c.leads = {2, 3};
  const auto t0 = Clock::now();
  const auto report = run_backtest(h.panel, c, [](const std::string& m) { std::cerr << m << "\n"; });
  const auto a1 = mean_auc(h.lead1, "tcn_att_lstm", 1), a2 = mean_auc(report, "tcn_att_lstm", 2),
             a3 = mean_auc(report, "tcn_att_lstm", 3);
  std::size_t ordered_years = 0;
  for (int year : c.test_years) {
    std::map<int, double> by_lead;
    for (const auto* rep : {&h.lead1, &report})
      for (const auto& cell : rep->cells)
        if (cell.test_year == year && cell.model == "tcn_att_lstm" && cell.auc)
          by_lead[cell.lead] = *cell.auc;
    if (by_lead.size() == 3 && by_lead[1] >= by_lead[2] && by_lead[2] >= by_lead[3]) ++ordered_years;
  }
  const bool pass = a1 && a2 && a3 && *a1 >= *a2 && *a2 >= *a3;
  return {pass, "mean AUC h=1 " + fmt("%.4f", a1.value_or(NAN)) + ", h=2 " +
                    fmt("%.4f", a2.value_or(NAN)) + ", h=3 " + fmt("%.4f", a3.value_or(NAN)) +
                    "; monotone in " + std::to_string(ordered_years) + "/" +
                    std::to_string(c.test_years.size()) + " years; " +
                    fmt("%.0f", seconds_since(t0)) + " s"};
}

Outcome criterion_explain(const Heavy& h) {
  const int T = h.config.test_years.back();
  const CellResult* cell = nullptr;
  for (const auto& c : h.lead1.cells)
    if (c.test_year == T && c.model == "tcn_att_lstm") cell = &c;
  if (!cell || !cell->params) return {false, "no trained main model for " + std::to_string(T)};
  const auto t0 = Clock::now();
  const auto data = prepare_cell(h.panel, T, 1, h.config.window_length);
  const ModelParams& params = *cell->params;

  // (b) attention surge at the last step for label-positive samples
  const auto att = extract_attention(params, data.test, h.config.threshold);
  const std::size_t L = data.test.window_length();
  std::vector<double> first, last;
  for (std::size_t s = 0; s < data.test.samples(); ++s)
    if (data.test.labels[s] == 1) {
      first.push_back(att.alpha.values()[s * L]);
      last.push_back(att.alpha.values()[s * L + L - 1]);
    }
  const auto welch = welch_t_test(last, first);
  const bool pass_b = welch.p_greater < 0.01 &&
                      att.mean_label_positive.back() > att.mean_label_positive.front();

  std::mt19937_64 rng(mix_seed(h.config.seed, 10));
  std::vector<std::size_t> idx(data.test.samples());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::vector<std::size_t> picked;
  std::sample(idx.begin(), idx.end(), std::back_inserter(picked), 300, rng);
  const auto subset = data.test.select(picked);
  const ValueFunction vf{model_function(params),
                         select_background(data.train, 100, mix_seed(h.config.seed, 11))};
  const auto& names = subset.feature_names;

  // (a) global per-feature ranking
  const auto per_feature = make_players(PlayerScheme::kPerFeature, L, names);
  const auto fa = explain_windows(vf, subset, per_feature, 64, mix_seed(h.config.seed, 12));
  const auto global = aggregate_global(fa, &subset);
  const std::set<std::string> top2{global.ranking[0].player, global.ranking[1].player};
  const bool pass_a = top2 == std::set<std::string>{kValuationFeature, kCashFlowFeature};

  // (c) high-debt cohort
  const auto cohort = cohort_analysis(subset, fa, kDebtFeature);
  const bool pass_c = cohort.high.front().player == kDebtFeature;

  // (d) temporal peak of the cash-flow driver
  const auto per_cell = make_players(PlayerScheme::kPerCell, L, names);
  const auto ca = explain_windows(vf, subset, per_cell, 32, mix_seed(h.config.seed, 13));
  const auto temporal = aggregate_temporal(ca, per_cell);
  const auto cf = temporal.feature_index(kCashFlowFeature);
  const bool pass_d = temporal.peak_step(cf) == L - 1;

  std::ostringstream d;
  d << "(a) " << (pass_a ? "ok" : "FAIL") << " top: " << global.ranking[0].player << " "
    << fmt("%.4f", global.ranking[0].mean_abs_phi) << ", " << global.ranking[1].player << " "
    << fmt("%.4f", global.ranking[1].mean_abs_phi) << ", " << global.ranking[2].player << " "
    << fmt("%.4f", global.ranking[2].mean_abs_phi) << "; (b) " << (pass_b ? "ok" : "FAIL")
    << " alpha_L " << fmt("%.3f", att.mean_label_positive.back()) << " vs alpha_1 "
    << fmt("%.3f", att.mean_label_positive.front()) << " p=" << fmt("%.1e", welch.p_greater)
    << "; (c) " << (pass_c ? "ok" : "FAIL") << " high-debt top: " << cohort.high[0].player << " "
    << fmt("%.4f", cohort.high[0].mean_abs_phi) << " next " << cohort.high[1].player << " "
    << fmt("%.4f", cohort.high[1].mean_abs_phi) << "; (d) " << (pass_d ? "ok" : "FAIL")
    << " cash flow by step";
  for (double v : temporal.curve[cf]) d << " " << fmt("%.4f", v);
  d << "; " << fmt("%.0f", seconds_since(t0)) << " s";
  return {pass_a && pass_b && pass_c && pass_d, d.str()};
}

// ---- 11: determinism ------------------------------------------------------

std::map<std::string, std::string> run_pipeline(const fs::path& root) {
  fs::remove_all(root);
  fs::create_directories(root);
  const auto cwd = fs::current_path();
  fs::current_path(root);
  write_file_atomic("config.json", R"({
    "seed": 1111,
    "gen": {"n_firms": 300},
    "backtest": {"test_years": [2023, 2024],
                 "model": {"conv_channels": 8, "hidden": 8, "attention": 8},
                 "train": {"max_epochs": 3}},
    "explain": {"samples": 20, "background": 20, "feature_permutations": 8,
                "cell_permutations": 4}
  })");
  std::ostringstream sink;
  auto call = [&](std::vector<std::string> args) {
    args.insert(args.begin(), "ews");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data(), sink, sink);
  };
  int rc = call({"gen-data", "--config", "config.json", "--out", "gen"});
  rc |= call({"train", "--config", "config.json", "--data", "gen/panel.csv", "--out", "train"});
  rc |= call({"backtest", "--config", "config.json", "--data", "gen/panel.csv", "--out", "bt"});
  rc |= call({"explain", "--config", "config.json", "--data", "gen/panel.csv", "--checkpoint",
              "train/checkpoint.json", "--out", "xai"});
  rc |= call({"report", "--backtest", "bt/backtest_report.json", "--explain",
              "xai/explain_summary.json", "--out", "report"});
  std::map<std::string, std::string> files;
  if (rc == 0)
    for (const auto& e : fs::recursive_directory_iterator("."))
      if (e.is_regular_file()) files[e.path().string()] = read_file(e.path().string());
  fs::current_path(cwd);
  return files;
}

Outcome criterion_determinism(const fs::path& work) {
  const auto a = run_pipeline(work / "run");
  const auto b = run_pipeline(work / "run");
  if (a.empty() || b.empty()) return {false, "pipeline failed"};
  std::size_t differing = 0;
  std::string first;
  for (const auto& [name, content] : a) {
    const auto it = b.find(name);
    if (it == b.end() || it->second != content) {
      if (first.empty()) first = name;
      ++differing;
    }
  }
  differing += b.size() > a.size() ? b.size() - a.size() : 0;
  return {differing == 0, std::to_string(a.size()) + " files from gen-data, train, backtest, "
                              "explain and report compared, " + std::to_string(differing) +
                              " differ" + (first.empty() ? "" : " (first: " + first + ")")};
}

}  // namespace
}  // namespace ews

int main(int argc, char** argv) {
  using namespace ews;
  CLI::App app{"Acceptance gate"};
  std::vector<int> only;
  std::size_t epochs = 20;
  std::string work = (fs::temp_directory_path() / "ews_acceptance").string();
  app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',');
  app.add_option("--epochs", epochs, "Epoch cap for the default-data backtests");
  app.add_option("--work", work, "Scratch directory");
  CLI11_PARSE(app, argc, argv);
  auto wanted = [&](int k) { return only.empty() || std::count(only.begin(), only.end(), k) > 0; };

  const std::map<int, std::string> titles{
      {1, "gradient correctness"}, {2, "causality"},          {3, "attention normalisation"},
      {4, "focal-loss degeneracy"}, {5, "Shapley axioms"},     {6, "metric oracles"},
      {7, "leakage hygiene"},       {8, "model ordering"},     {9, "lead-time decay"},
      {10, "explainability recovery"}, {11, "determinism"}};
  bool all = true;
  auto report = [&](int k, const Outcome& o) {
    all = all && o.pass;
    std::cout << "criterion " << k << ": " << (o.pass ? "PASS" : "FAIL") << "  " << titles.at(k)
              << ": " << o.detail << std::endl;
  };
  auto guarded = [&](int k, const std::function<Outcome()>& f) {
    if (!wanted(k)) return;
    try {
      report(k, f());
    } catch (const std::exception& e) {
      report(k, {false, std::string("error: ") + e.what()});
    }
  };

  guarded(1, criterion_gradients);
  guarded(2, criterion_causality);
  guarded(3, criterion_attention_sum);
  guarded(4, criterion_focal_degeneracy);
  guarded(5, criterion_shapley);
  guarded(6, criterion_metrics);
  guarded(7, criterion_leakage);

  if (wanted(8) || wanted(9) || wanted(10)) {
    Heavy h;
    h.panel = generate(GenConfig::defaults()).panel;
    h.config = heavy_config(epochs);
    const auto t0 = Clock::now();
    try {
      h.lead1 = run_backtest(h.panel, h.config,
                             [](const std::string& m) { std::cerr << m << "\n"; });
      h.lead1_seconds = seconds_since(t0);
      guarded(8, [&] { return criterion_ordering(h); });
      guarded(9, [&] { return criterion_decay(h); });
      guarded(10, [&] { return criterion_explain(h); });
    } catch (const std::exception& e) {
      for (int k : {8, 9, 10})
        if (wanted(k)) report(k, {false, std::string("error: ") + e.what()});
    }
  }
  guarded(11, [&] { return criterion_determinism(work); });
  std::cout << (all ? "acceptance: all selected criteria pass" : "acceptance: FAILURES") << std::endl;
  return all ? 0 : 1;
}
