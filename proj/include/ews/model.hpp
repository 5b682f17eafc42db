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

// TCN -> LSTM -> temporal attention -> sigmoid classifier over one window of
// L yearly feature vectors, plus the two single-architecture ablations.
//
// Batches are processed as a sequence of L matrices (B x channels), one per
// time step. No operation mixes rows, so each window's output is independent
// of the rest of its batch.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "ews/autodiff.hpp"
#include "ews/tensor.hpp"

namespace ews {

enum class Architecture {
  kTcnAttLstm,  // full model
  kTcnOnly,     // TCN stack, head on the final step
  kLstmOnly,    // LSTM on raw features, head on the final hidden state
};

std::string to_string(Architecture arch);
Architecture architecture_from_string(std::string_view name);

struct ModelConfig {
  Architecture arch = Architecture::kTcnAttLstm;
  std::size_t window_length = 3;  // L
  std::size_t features = 12;      // F
  std::size_t conv_channels = 32; // D_c
  std::size_t hidden = 64;        // D_h
  std::size_t attention = 32;     // D_a
  std::size_t kernel_size = 2;    // K
  std::size_t blocks = 2;         // residual blocks, dilation 2^n
  double dropout = 0.2;           // on the context vector, train mode only

  void validate() const;
  // Steps of history visible to the last TCN output.
  std::size_t receptive_field() const;
  bool has_tcn() const { return arch != Architecture::kLstmOnly; }
  bool has_lstm() const { return arch != Architecture::kTcnOnly; }
  bool has_attention() const { return arch == Architecture::kTcnAttLstm; }
  std::size_t head_width() const { return has_lstm() ? hidden : conv_channels; }

  bool operator==(const ModelConfig&) const = default;
};

// Weight-normalised convolution: kernel = gain * direction / ||direction||,
// norm taken per output channel. direction is (K * C_in) x C_out with tap
// k = 0 (the current step) in the first C_in rows.
template <class T>
struct WeightNormConv {
  T direction;
  T gain;

  bool operator==(const WeightNormConv&) const = default;
};

template <class T>
struct ResidualBlock {
  std::size_t dilation = 1;
  WeightNormConv<T> conv1;
  WeightNormConv<T> conv2;
  std::optional<T> projection;  // C_in x C_out; identity skip when absent

  bool operator==(const ResidualBlock&) const = default;
};

// weights is 4*D_h x (D_h + D_in), row blocks (forget, input, output,
// candidate); columns are [h_{t-1}, z_t].
template <class T>
struct LstmWeights {
  T weights;
  T bias;

  bool operator==(const LstmWeights&) const = default;
};

template <class T>
struct AttentionWeights {
  T w_a;    // D_a x D_h
  T w_q;    // D_a x D_a
  T query;  // D_a
  T score;  // v_a, D_a
  T bias;   // b_a, D_a

  bool operator==(const AttentionWeights&) const = default;
};

template <class T>
struct HeadWeights {
  T weights;  // 1 x head width
  T bias;     // 1

  bool operator==(const HeadWeights&) const = default;
};

template <class T>
struct Network {
  std::vector<ResidualBlock<T>> tcn;
  std::optional<LstmWeights<T>> lstm;
  std::optional<AttentionWeights<T>> attention;
  HeadWeights<T> head;

  bool operator==(const Network&) const = default;

  // Visits every trainable array with a stable dotted name.
  template <class F>
  void for_each(F&& f) const { visit(*this, f); }
  template <class F>
  void for_each(F&& f) { visit(*this, f); }

  // Same structure with each array converted by f(name, const T&).
  template <class U, class F>
  Network<U> map(F&& f) const {
    Network<U> out;
    for (std::size_t b = 0; b < tcn.size(); ++b) {
      const auto& src = tcn[b];
      const std::string p = "tcn." + std::to_string(b) + ".";
      ResidualBlock<U> blk;
      blk.dilation = src.dilation;
      blk.conv1 = {f(p + "conv1.v", src.conv1.direction), f(p + "conv1.g", src.conv1.gain)};
      blk.conv2 = {f(p + "conv2.v", src.conv2.direction), f(p + "conv2.g", src.conv2.gain)};
      if (src.projection) blk.projection = f(p + "proj", *src.projection);
      out.tcn.push_back(std::move(blk));
    }
    if (lstm) out.lstm = LstmWeights<U>{f("lstm.W_H", lstm->weights), f("lstm.b_H", lstm->bias)};
    if (attention)
      out.attention = AttentionWeights<U>{
          f("attn.W_a", attention->w_a), f("attn.W_q", attention->w_q),
          f("attn.q", attention->query), f("attn.v_a", attention->score),
          f("attn.b_a", attention->bias)};
    out.head = {f("head.W_o", head.weights), f("head.b_o", head.bias)};
    return out;
  }

 private:
  template <class Self, class F>
  static void visit(Self& self, F& f) {
    for (std::size_t b = 0; b < self.tcn.size(); ++b) {
      auto& blk = self.tcn[b];
      const std::string p = "tcn." + std::to_string(b) + ".";
      f(p + "conv1.v", blk.conv1.direction);
      f(p + "conv1.g", blk.conv1.gain);
      f(p + "conv2.v", blk.conv2.direction);
      f(p + "conv2.g", blk.conv2.gain);
      if (blk.projection) f(p + "proj", *blk.projection);
    }
    if (self.lstm) {
      f(std::string("lstm.W_H"), self.lstm->weights);
      f(std::string("lstm.b_H"), self.lstm->bias);
    }
    if (self.attention) {
      f(std::string("attn.W_a"), self.attention->w_a);
      f(std::string("attn.W_q"), self.attention->w_q);
      f(std::string("attn.q"), self.attention->query);
      f(std::string("attn.v_a"), self.attention->score);
      f(std::string("attn.b_a"), self.attention->bias);
    }
    f(std::string("head.W_o"), self.head.weights);
    f(std::string("head.b_o"), self.head.bias);
  }
};

struct ModelParams {
  ModelConfig config;
  Network<Tensor> weights;

  std::vector<Tensor*> arrays();
  std::vector<const Tensor*> arrays() const;
  std::vector<std::string> names() const;
  std::size_t parameter_count() const;
  double squared_norm() const;

  bool operator==(const ModelParams&) const = default;
};

// Glorot-uniform weights from a fixed seed; weight-norm gains start at the
// direction norms, the LSTM forget-gate bias at +1.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

// Places every array on the tape as a leaf.
Network<ad::Var> bind(ad::Tape& tape, const ModelParams& params);

namespace layers {

using Sequence = std::vector<ad::Var>;  // one B x C matrix per time step

ad::Var weight_norm(ad::Var direction, ad::Var gain);

// z_t = sum_k x_{t - d*k} W_k, taps before the first step read zeros.
Sequence dilated_causal_conv(const Sequence& x, ad::Var kernel,
                             std::size_t kernel_size, std::size_t dilation);

Sequence residual_block(const Sequence& x, const ResidualBlock<ad::Var>& block,
                        std::size_t kernel_size);

struct LstmState {
  ad::Var h;
  ad::Var c;
};

LstmState lstm_step(ad::Var z, const LstmState& prev,
                    const LstmWeights<ad::Var>& weights);

Sequence lstm(const Sequence& z, const LstmWeights<ad::Var>& weights);

struct Pooled {
  ad::Var context;  // B x D_h
  ad::Var weights;  // B x L, rows sum to one
};

Pooled attention_pool(const Sequence& h, const AttentionWeights<ad::Var>& weights);

// Splits a B x L x F batch into per-step B x F constants.
Sequence split_steps(ad::Tape& tape, const Tensor& windows);

}  // namespace layers

enum class Mode { kTrain, kEval };

struct ForwardPass {
  ad::Var probability;               // B x 1
  std::optional<ad::Var> attention;  // B x L for the full model
};

// Batched forward over B x L x F (or a single L x F window). Train mode
// draws inverted-dropout masks for the context vector from `rng`.
ForwardPass forward(ad::Tape& tape, const Network<ad::Var>& net,
                    const ModelConfig& config, const Tensor& windows, Mode mode,
                    std::mt19937_64* rng = nullptr);

struct Prediction {
  std::vector<double> probability;
  Tensor attention;  // S x L; empty for architectures without attention
};

// Eval-mode scoring without gradient bookkeeping.
Prediction predict(const ModelParams& params, const Tensor& windows,
                   std::size_t chunk = 1024);

// Versioned JSON checkpoint: hyperparameters plus named flat arrays.
// `extra` carries caller metadata (e.g. the fitted standardizer).
nlohmann::json checkpoint_json(const ModelParams& params,
                               const nlohmann::json& extra = nullptr);
std::pair<ModelParams, nlohmann::json> parse_checkpoint(const nlohmann::json& j);

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const nlohmann::json& extra = nullptr);
std::pair<ModelParams, nlohmann::json> load_checkpoint(const std::string& path);

}  // namespace ews
