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

#include "ews/model.hpp"

#include <cmath>

#include "ews/errors.hpp"
#include "ews/io.hpp"

namespace ews {

namespace {

constexpr const char* kCheckpointFormat = "ews-checkpoint";
constexpr int kCheckpointVersion = 1;

Tensor glorot(Shape shape, std::size_t fan_in, std::size_t fan_out,
              std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = dist(rng);
  return t;
}

WeightNormConv<Tensor> init_conv(std::size_t k, std::size_t in, std::size_t out,
                                 std::mt19937_64& rng) {
  WeightNormConv<Tensor> conv{glorot({k * in, out}, k * in, out, rng), Tensor({out})};
  for (std::size_t j = 0; j < out; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < k * in; ++i) s += conv.direction.at(i, j) * conv.direction.at(i, j);
    conv.gain[j] = std::sqrt(s);
  }
  return conv;
}

}  // namespace

std::string to_string(Architecture arch) {
  switch (arch) {
    case Architecture::kTcnAttLstm: return "tcn_att_lstm";
    case Architecture::kTcnOnly: return "tcn";
    case Architecture::kLstmOnly: return "lstm";
  }
  return "unknown";
}

Architecture architecture_from_string(std::string_view name) {
  if (name == "tcn_att_lstm") return Architecture::kTcnAttLstm;
  if (name == "tcn") return Architecture::kTcnOnly;
  if (name == "lstm") return Architecture::kLstmOnly;
  throw ConfigError("unknown architecture '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  if (window_length < 1) throw ConfigError("window length must be >= 1");
  if (features < 1) throw ConfigError("feature count must be >= 1");
  if (kernel_size < 1) throw ConfigError("kernel size must be >= 1");
  if (has_tcn() && (blocks < 1 || conv_channels < 1))
    throw ConfigError("TCN needs at least one block and one channel");
  if (has_lstm() && hidden < 1) throw ConfigError("hidden size must be >= 1");
  if (has_attention() && attention < 1)
    throw ConfigError("attention size must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0))
    throw ConfigError("dropout must lie in [0, 1)");
}

std::size_t ModelConfig::receptive_field() const {
  std::size_t rf = 1;
  for (std::size_t b = 0; b < blocks; ++b) rf += 2 * (kernel_size - 1) * (std::size_t{1} << b);
  return rf;
}

std::vector<Tensor*> ModelParams::arrays() {
  std::vector<Tensor*> out;
  weights.for_each([&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

std::vector<const Tensor*> ModelParams::arrays() const {
  std::vector<const Tensor*> out;
  weights.for_each([&](const std::string&, const Tensor& t) { out.push_back(&t); });
  return out;
}

std::vector<std::string> ModelParams::names() const {
  std::vector<std::string> out;
  weights.for_each([&](const std::string& n, const Tensor&) { out.push_back(n); });
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : arrays()) n += t->size();
  return n;
}

double ModelParams::squared_norm() const {
  double s = 0.0;
  for (const Tensor* t : arrays()) s += t->squared_norm();
  return s;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ModelParams p;
  p.config = config;
  const std::size_t k = config.kernel_size;

  if (config.has_tcn()) {
    std::size_t in = config.features;
    for (std::size_t b = 0; b < config.blocks; ++b) {
      const std::size_t out = config.conv_channels;
      ResidualBlock<Tensor> blk;
      blk.dilation = std::size_t{1} << b;
      blk.conv1 = init_conv(k, in, out, rng);
      blk.conv2 = init_conv(k, out, out, rng);
      if (in != out) blk.projection = glorot({in, out}, in, out, rng);
      p.weights.tcn.push_back(std::move(blk));
      in = out;
    }
  }
  if (config.has_lstm()) {
    const std::size_t dh = config.hidden;
    const std::size_t din = config.has_tcn() ? config.conv_channels : config.features;
    LstmWeights<Tensor> lstm{glorot({4 * dh, dh + din}, dh + din, 4 * dh, rng),
                             Tensor({4 * dh})};
    for (std::size_t j = 0; j < dh; ++j) lstm.bias[j] = 1.0;  // forget gate
    p.weights.lstm = std::move(lstm);
  }
  if (config.has_attention()) {
    const std::size_t da = config.attention, dh = config.hidden;
    p.weights.attention = AttentionWeights<Tensor>{
        glorot({da, dh}, dh, da, rng), glorot({da, da}, da, da, rng),
        glorot({da}, da, 1, rng), glorot({da}, da, 1, rng), Tensor({da})};
  }
  const std::size_t hw = config.head_width();
  p.weights.head = {glorot({1, hw}, hw, 1, rng), Tensor({1})};
  return p;
}

Network<ad::Var> bind(ad::Tape& tape, const ModelParams& params) {
  return params.weights.map<ad::Var>(
      [&tape](const std::string&, const Tensor& t) { return tape.leaf(t); });
}

namespace layers {

ad::Var weight_norm(ad::Var direction, ad::Var gain) {
  const ad::Var norms = ad::sqrt(ad::sum_rows(ad::square(direction)));
  return direction * (gain / norms);
}

Sequence dilated_causal_conv(const Sequence& x, ad::Var kernel,
                             std::size_t kernel_size, std::size_t dilation) {
  if (kernel_size < 1 || dilation < 1)
    throw ConfigError("dilated_causal_conv: kernel size and dilation must be >= 1");
  if (x.empty()) throw DimensionError("dilated_causal_conv: empty sequence");
  const Tensor& x0 = x.front().value();
  const std::size_t in = x0.cols();
  if (kernel.value().rows() != kernel_size * in)
    throw DimensionError("dilated_causal_conv: kernel has " +
                         std::to_string(kernel.value().rows()) + " rows, expected " +
                         std::to_string(kernel_size * in));
  ad::Tape& tape = kernel.tape();
  std::optional<ad::Var> zeros;
  Sequence out;
  out.reserve(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) {
    std::vector<ad::Var> taps;
    taps.reserve(kernel_size);
    for (std::size_t k = 0; k < kernel_size; ++k) {
      if (t >= dilation * k) {
        taps.push_back(x[t - dilation * k]);
      } else {
        if (!zeros) zeros = tape.constant(Tensor({x0.rows(), in}));
        taps.push_back(*zeros);
      }
    }
    const ad::Var stacked = kernel_size == 1 ? taps[0] : ad::concat_cols(taps);
    out.push_back(ad::matmul(stacked, kernel));
  }
  return out;
}

Sequence residual_block(const Sequence& x, const ResidualBlock<ad::Var>& block,
                        std::size_t kernel_size) {
  const ad::Var w1 = weight_norm(block.conv1.direction, block.conv1.gain);
  const ad::Var w2 = weight_norm(block.conv2.direction, block.conv2.gain);
  Sequence hidden = dilated_causal_conv(x, w1, kernel_size, block.dilation);
  for (auto& v : hidden) v = ad::relu(v);
  const Sequence mapped = dilated_causal_conv(hidden, w2, kernel_size, block.dilation);
  if (!block.projection && x.front().value().cols() != mapped.front().value().cols())
    throw DimensionError("residual_block: channel change needs a projection");
  Sequence out;
  out.reserve(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) {
    const ad::Var skip = block.projection ? ad::matmul(x[t], *block.projection) : x[t];
    out.push_back(ad::relu(mapped[t] + skip));
  }
  return out;
}

LstmState lstm_step(ad::Var z, const LstmState& prev,
                    const LstmWeights<ad::Var>& weights) {
  const std::size_t dh = prev.h.value().cols();
  if (weights.weights.value().rows() != 4 * dh ||
      weights.weights.value().cols() != dh + z.value().cols())
    throw DimensionError("lstm_step: weight shape " +
                         shape_string(weights.weights.shape()) +
                         " inconsistent with inputs");
  const ad::Var joint = ad::concat_cols(std::vector<ad::Var>{prev.h, z});
  const ad::Var gates = ad::matmul_nt(joint, weights.weights) + weights.bias;
  const ad::Var f = ad::sigmoid(ad::slice_cols(gates, 0, dh));
  const ad::Var i = ad::sigmoid(ad::slice_cols(gates, dh, 2 * dh));
  const ad::Var o = ad::sigmoid(ad::slice_cols(gates, 2 * dh, 3 * dh));
  const ad::Var g = ad::tanh(ad::slice_cols(gates, 3 * dh, 4 * dh));
  const ad::Var c = f * prev.c + i * g;
  return {o * ad::tanh(c), c};
}

Sequence lstm(const Sequence& z, const LstmWeights<ad::Var>& weights) {
  ad::Tape& tape = weights.weights.tape();
  const std::size_t dh = weights.weights.value().rows() / 4;
  const ad::Var zero = tape.constant(Tensor({z.front().value().rows(), dh}));
  LstmState state{zero, zero};
  Sequence h;
  h.reserve(z.size());
  for (const auto& zt : z) {
    state = lstm_step(zt, state, weights);
    h.push_back(state.h);
  }
  return h;
}

Pooled attention_pool(const Sequence& h, const AttentionWeights<ad::Var>& w) {
  if (h.empty()) throw DimensionError("attention_pool: empty sequence");
  const std::size_t da = w.w_a.value().rows();
  const ad::Var query_term =
      ad::matmul_nt(ad::reshape(w.query, {1, da}), w.w_q) + w.bias;
  const ad::Var score = ad::reshape(w.score, {da, 1});
  std::vector<ad::Var> scores;
  scores.reserve(h.size());
  for (const auto& ht : h)
    scores.push_back(ad::matmul(ad::tanh(ad::matmul_nt(ht, w.w_a) + query_term), score));
  const ad::Var alpha =
      ad::softmax_rows(h.size() == 1 ? scores[0] : ad::concat_cols(scores));
  ad::Var context = h[0] * ad::slice_cols(alpha, 0, 1);
  for (std::size_t t = 1; t < h.size(); ++t)
    context = context + h[t] * ad::slice_cols(alpha, t, t + 1);
  return {context, alpha};
}

Sequence split_steps(ad::Tape& tape, const Tensor& windows) {
  const std::size_t b = windows.rank() == 3 ? windows.shape()[0] : 1;
  const std::size_t l = windows.shape()[windows.rank() - 2];
  const std::size_t f = windows.shape().back();
  Sequence steps;
  steps.reserve(l);
  for (std::size_t t = 0; t < l; ++t) {
    Tensor step({b, f});
    for (std::size_t s = 0; s < b; ++s)
      std::copy_n(windows.data() + (s * l + t) * f, f, step.data() + s * f);
    steps.push_back(tape.constant(std::move(step)));
  }
  return steps;
}

}  // namespace layers

ForwardPass forward(ad::Tape& tape, const Network<ad::Var>& net,
                    const ModelConfig& config, const Tensor& windows, Mode mode,
                    std::mt19937_64* rng) {
  if (windows.rank() != 2 && windows.rank() != 3)
    throw DimensionError("forward: expected L x F or B x L x F input, got " +
                         shape_string(windows.shape()));
  const std::size_t l = windows.shape()[windows.rank() - 2];
  if (l != config.window_length || windows.shape().back() != config.features)
    throw DimensionError("forward: window shape " + shape_string(windows.shape()) +
                         " does not match configured L x F");
  if (!windows.all_finite()) throw NumericError("forward: non-finite window");

  layers::Sequence seq = layers::split_steps(tape, windows);
  for (const auto& block : net.tcn) seq = layers::residual_block(seq, block, config.kernel_size);

  ForwardPass out;
  ad::Var context;
  if (config.has_lstm()) {
    seq = layers::lstm(seq, *net.lstm);
    if (config.has_attention()) {
      const auto pooled = layers::attention_pool(seq, *net.attention);
      context = pooled.context;
      out.attention = pooled.weights;
    } else {
      context = seq.back();
    }
  } else {
    context = seq.back();
  }

  if (mode == Mode::kTrain && config.dropout > 0.0) {
    if (!rng) throw ContractError("forward: train mode needs an RNG for dropout");
    const double keep = 1.0 - config.dropout;
    std::bernoulli_distribution draw(keep);
    Tensor mask(context.shape());
    for (double& m : mask.values()) m = draw(*rng) ? 1.0 / keep : 0.0;
    context = context * tape.constant(std::move(mask));
  }
  out.probability = ad::sigmoid(ad::matmul_nt(context, net.head.weights) + net.head.bias);
  return out;
}

Prediction predict(const ModelParams& params, const Tensor& windows,
                   std::size_t chunk) {
  const Tensor batch = windows.rank() == 2
                           ? windows.reshaped({1, windows.shape()[0], windows.shape()[1]})
                           : windows;
  if (batch.rank() != 3) throw DimensionError("predict: expected S x L x F input");
  const std::size_t s = batch.shape()[0], l = batch.shape()[1], f = batch.shape()[2];
  Prediction out;
  out.probability.reserve(s);
  if (params.config.has_attention()) out.attention = Tensor({s, l});
  chunk = std::max<std::size_t>(chunk, 1);
  for (std::size_t begin = 0; begin < s; begin += chunk) {
    const std::size_t n = std::min(chunk, s - begin);
    Tensor part({n, l, f});
    std::copy_n(batch.data() + begin * l * f, n * l * f, part.data());
    ad::Tape tape(false);
    const auto net = bind(tape, params);
    const auto pass = forward(tape, net, params.config, part, Mode::kEval);
    const Tensor& p = pass.probability.value();
    out.probability.insert(out.probability.end(), p.values().begin(), p.values().end());
    if (pass.attention)
      std::copy_n(pass.attention->value().data(), n * l, out.attention.data() + begin * l);
  }
  return out;
}

nlohmann::json checkpoint_json(const ModelParams& params,
                               const nlohmann::json& extra) {
  const ModelConfig& c = params.config;
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["hyper"] = {{"arch", to_string(c.arch)},
                {"window_length", c.window_length},
                {"features", c.features},
                {"conv_channels", c.conv_channels},
                {"hidden", c.hidden},
                {"attention", c.attention},
                {"kernel_size", c.kernel_size},
                {"blocks", c.blocks},
                {"dropout", c.dropout}};
  nlohmann::json groups = nlohmann::json::array();
  params.weights.for_each([&](const std::string& name, const Tensor& t) {
    groups.push_back({{"name", name},
                      {"shape", t.shape()},
                      {"data", std::vector<double>(t.values().begin(), t.values().end())}});
  });
  j["groups"] = std::move(groups);
  if (!extra.is_null()) j["extra"] = extra;
  return j;
}

std::pair<ModelParams, nlohmann::json> parse_checkpoint(const nlohmann::json& j) {
  if (j.value("format", "") != kCheckpointFormat)
    throw DataError("not an ews checkpoint");
  if (j.value("version", 0) != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + j.value("version", nlohmann::json()).dump());
  const auto& h = j.at("hyper");
  ModelConfig c;
  c.arch = architecture_from_string(h.at("arch").get<std::string>());
  c.window_length = h.at("window_length");
  c.features = h.at("features");
  c.conv_channels = h.at("conv_channels");
  c.hidden = h.at("hidden");
  c.attention = h.at("attention");
  c.kernel_size = h.at("kernel_size");
  c.blocks = h.at("blocks");
  c.dropout = h.at("dropout");

  ModelParams p = init_params(c, 0);
  const auto& groups = j.at("groups");
  std::size_t index = 0;
  p.weights.for_each([&](const std::string& name, Tensor& t) {
    if (index >= groups.size()) throw DataError("checkpoint missing group " + name);
    const auto& g = groups[index++];
    if (g.at("name").get<std::string>() != name)
      throw DataError("checkpoint group order mismatch at " + name);
    Shape shape = g.at("shape").get<Shape>();
    if (shape != t.shape())
      throw DataError("checkpoint group " + name + " has shape " +
                      shape_string(shape) + ", expected " + shape_string(t.shape()));
    t = Tensor(std::move(shape), g.at("data").get<std::vector<double>>());
  });
  if (index != groups.size()) throw DataError("checkpoint has unexpected extra groups");
  return {std::move(p), j.value("extra", nlohmann::json())};
}

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const nlohmann::json& extra) {
  write_file_atomic(path, checkpoint_json(params, extra).dump(1) + "\n");
}

std::pair<ModelParams, nlohmann::json> load_checkpoint(const std::string& path) {
  return parse_checkpoint(nlohmann::json::parse(read_file(path)));
}

}  // namespace ews
