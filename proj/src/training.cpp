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

#include "ews/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>

#include "ews/errors.hpp"
#include "ews/io.hpp"
#include "ews/metrics.hpp"

namespace ews {

namespace {

void check_alpha_gamma(double alpha, double gamma) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("focal alpha must lie in [0, 1]");
  if (!(gamma >= 0.0)) throw ConfigError("focal gamma must be >= 0");
}

double clamp_probability(double p) {
  if (!std::isfinite(p)) throw NumericError("focal_loss: non-finite probability");
  const double c = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  if (!(c > 0.0 && c < 1.0)) throw NumericError("focal_loss: probability outside (0, 1)");
  return c;
}

// Per-sample loss and d loss / d p at the clamped probability.
std::pair<double, double> focal_term(double p, int y, double alpha, double gamma) {
  if (y == 1) {
    const double q = 1.0 - p;
    const double w = std::pow(q, gamma);
    const double lp = std::log(p);
    const double dw = gamma == 0.0 ? 0.0 : -gamma * std::pow(q, gamma - 1.0);
    return {-alpha * w * lp, -alpha * (dw * lp + w / p)};
  }
  const double w = std::pow(p, gamma);
  const double lq = std::log1p(-p);
  const double dw = gamma == 0.0 ? 0.0 : gamma * std::pow(p, gamma - 1.0);
  return {-(1.0 - alpha) * w * lq, -(1.0 - alpha) * (dw * lq - w / (1.0 - p))};
}

double positive_prior(std::span<const int> labels) {
  return static_cast<double>(std::count(labels.begin(), labels.end(), 1)) /
         static_cast<double>(labels.size());
}

std::string metric_cell(const std::optional<double>& v) {
  return v ? format_double(*v) : "NA";
}

}  // namespace

void TrainConfig::validate() const {
  if (alpha) check_alpha_gamma(*alpha, gamma);
  else check_alpha_gamma(0.5, gamma);
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("Adam epsilon must be > 0");
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (max_epochs == 0) throw ConfigError("max epochs must be >= 1");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j = {{"gamma", gamma},          {"lambda", lambda},
                      {"learning_rate", learning_rate}, {"beta1", beta1},
                      {"beta2", beta2},          {"epsilon", epsilon},
                      {"batch_size", batch_size}, {"max_epochs", max_epochs},
                      {"patience", patience},    {"threshold", threshold},
                      {"seed", seed}};
  j["alpha"] = alpha ? nlohmann::json(*alpha) : nlohmann::json(nullptr);
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (j.contains("alpha") && !j.at("alpha").is_null()) c.alpha = j.at("alpha").get<double>();
  c.gamma = j.value("gamma", c.gamma);
  c.lambda = j.value("lambda", c.lambda);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.threshold = j.value("threshold", c.threshold);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

ad::Var focal_loss(ad::Var probability, std::span<const int> labels, double alpha,
                   double gamma) {
  check_alpha_gamma(alpha, gamma);
  const Tensor& p = probability.value();
  if (p.size() != labels.size())
    throw DimensionError("focal_loss: " + std::to_string(p.size()) + " probabilities vs " +
                         std::to_string(labels.size()) + " labels");
  if (labels.empty()) throw DimensionError("focal_loss: empty batch");
  const double n = static_cast<double>(labels.size());
  double total = 0.0;
  auto local = std::make_shared<std::vector<double>>(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double raw = p[i];
    const double c = clamp_probability(raw);
    const auto [loss, d] = focal_term(c, labels[i], alpha, gamma);
    total += loss;
    // The clamp passes no gradient where it is active.
    (*local)[i] = (raw == c) ? d / n : 0.0;
  }
  return probability.tape().push(
      Tensor::scalar(total / n), {probability},
      [parent = probability.id(), local](ad::Tape& tape, std::size_t self) {
        const double g = tape.grad_buffer(self)[0];
        Tensor& gp = tape.grad_buffer(parent);
        for (std::size_t i = 0; i < local->size(); ++i) gp[i] += g * (*local)[i];
      },
      "focal_loss");
}

double focal_loss(std::span<const double> probability, std::span<const int> labels,
                  double alpha, double gamma) {
  check_alpha_gamma(alpha, gamma);
  if (probability.size() != labels.size()) throw DimensionError("focal_loss: size mismatch");
  if (labels.empty()) throw DimensionError("focal_loss: empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    total += focal_term(clamp_probability(probability[i]), labels[i], alpha, gamma).first;
  return total / static_cast<double>(labels.size());
}

double focal_loss(std::span<const double> probability, std::span<const int> labels,
                  double alpha, double gamma, double lambda, const ModelParams& params) {
  return focal_loss(probability, labels, alpha, gamma) + lambda * params.squared_norm();
}

AdamState AdamState::zeros_like(const ModelParams& params) {
  AdamState s;
  for (const Tensor* t : params.arrays()) {
    s.m.emplace_back(t->shape(), 0.0);
    s.v.emplace_back(t->shape(), 0.0);
  }
  return s;
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads,
               AdamState& state, const TrainConfig& config) {
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      params.size() != state.v.size())
    throw DimensionError("adam_step: parameter, gradient and state counts differ");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (grads[k].shape() != params[k]->shape() || state.m[k].shape() != params[k]->shape())
      throw DimensionError("adam_step: shape mismatch for array " + std::to_string(k));
    if (!grads[k].all_finite())
      throw NumericError("adam_step: non-finite gradient in array " + std::to_string(k) +
                         " at step " + std::to_string(state.step + 1));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto theta = params[k]->values();
    auto m = state.m[k].values();
    auto v = state.v[k].values();
    const auto g = grads[k].values();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      theta[i] -= config.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + config.epsilon);
    }
  }
}

ChronoSplit chronological_split(const WindowTensor& windows) {
  if (windows.samples() == 0) throw ConfigError("chronological_split: no windows");
  const int last = *std::max_element(windows.label_years.begin(), windows.label_years.end());
  ChronoSplit s;
  s.train = windows.filter([&](std::size_t i) { return windows.label_years[i] < last; });
  s.validation = windows.filter([&](std::size_t i) { return windows.label_years[i] == last; });
  if (s.train.samples() == 0)
    throw ConfigError("chronological_split: only one label year, nothing left to train on");
  return s;
}

TrainResult train(const WindowTensor& train_windows, const WindowTensor& validation,
                  const TrainConfig& config, const ModelConfig& model_config,
                  const EpochCallback& on_epoch) {
  config.validate();
  model_config.validate();
  if (train_windows.samples() == 0) throw ConfigError("train: empty training split");
  if (validation.samples() == 0) throw ConfigError("train: empty validation split");
  const double prior = positive_prior(train_windows.labels);
  if (prior == 0.0 || prior == 1.0) throw ConfigError("train: single-class training set");
  const int train_last =
      *std::max_element(train_windows.label_years.begin(), train_windows.label_years.end());
  const int val_first =
      *std::min_element(validation.label_years.begin(), validation.label_years.end());
  if (val_first <= train_last)
    throw ContractError("train: validation label years must follow the training years");
  if (train_windows.window_length() != model_config.window_length ||
      train_windows.features() != model_config.features ||
      validation.window_length() != model_config.window_length ||
      validation.features() != model_config.features)
    throw DimensionError("train: window shape does not match the model config");

  TrainResult result;
  result.alpha = config.alpha.value_or(1.0 - prior);
  ModelParams params = init_params(model_config, mix_seed(config.seed, 1));
  AdamState adam = AdamState::zeros_like(params);
  std::mt19937_64 shuffle_rng(mix_seed(config.seed, 2));
  std::mt19937_64 dropout_rng(mix_seed(config.seed, 3));

  const std::size_t n = train_windows.samples();
  const std::size_t cell = model_config.window_length * model_config.features;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  double best_score = -std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  result.params = params;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t b = std::min(config.batch_size, n - start);
      std::vector<double> xs(b * cell);
      std::vector<int> ys(b);
      for (std::size_t i = 0; i < b; ++i) {
        const std::size_t s = order[start + i];
        std::copy_n(train_windows.x.data() + s * cell, cell, xs.data() + i * cell);
        ys[i] = train_windows.labels[s];
      }
      const Tensor batch({b, model_config.window_length, model_config.features}, std::move(xs));

      ad::Tape tape;
      const auto net = bind(tape, params);
      const auto pass = forward(tape, net, model_config, batch, Mode::kTrain, &dropout_rng);
      ad::Var loss = focal_loss(pass.probability, ys, result.alpha, config.gamma);
      if (config.lambda > 0.0) {
        std::vector<ad::Var> leaves;
        net.for_each([&](const std::string&, const ad::Var& v) { leaves.push_back(v); });
        ad::Var penalty = ad::sum_squares(leaves.front());
        for (std::size_t k = 1; k < leaves.size(); ++k)
          penalty = penalty + ad::sum_squares(leaves[k]);
        loss = loss + config.lambda * penalty;
      }
      tape.backward(loss);
      loss_sum += loss.value().item() * static_cast<double>(b);

      std::vector<Tensor> grads;
      net.for_each([&](const std::string&, const ad::Var& v) { grads.push_back(v.grad()); });
      const auto arrays = params.arrays();
      adam_step(arrays, grads, adam, config);
    }

    const Prediction val = predict(params, validation.x);
    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss_sum / static_cast<double>(n);
    entry.val_auc = try_roc_auc(val.probability, validation.labels);
    entry.val_pr_auc = try_pr_auc(val.probability, validation.labels);
    entry.val_f1 = f1_at_threshold(val.probability, validation.labels, config.threshold);
    entry.val_loss = focal_loss(val.probability, validation.labels, result.alpha, config.gamma);
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);

    // Validation years without positives fall back to the focal loss.
    const double score = entry.val_pr_auc ? *entry.val_pr_auc : -entry.val_loss;
    if (score > best_score) {
      best_score = score;
      since_best = 0;
      result.params = params;
      result.best_epoch = epoch;
    } else if (++since_best > config.patience) {
      break;
    }
  }
  return result;
}

std::string training_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream os;
  os << "epoch,train_loss,val_auc,val_pr_auc,val_f1\n";
  for (const auto& e : log)
    os << e.epoch << ',' << format_double(e.train_loss) << ',' << metric_cell(e.val_auc) << ','
       << metric_cell(e.val_pr_auc) << ',' << format_double(e.val_f1) << '\n';
  return os.str();
}

}  // namespace ews
