// Copyright (c) 2026 The MultiFiT-kit Authors. All Rights Reserved.
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

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "multifit/ops.hpp"
#include "multifit/parameters.hpp"

namespace multifit {

enum class CellKind { qrnn, lstm };
enum class Mode { train, eval };

std::string to_string(CellKind kind);
CellKind cell_kind_from_string(std::string_view name);

// Base dropout rates, all scaled by `multiplier` (0 for pretraining).
struct DropoutProfile {
  double embedding = 0.1;
  double input = 0.15;
  double hidden = 0.15;
  double output = 0.25;
  double multiplier = 0.0;
};

struct ModelConfig {
  int vocab_size = 15000;
  int emb_dim = 400;
  int hidden_dim = 1550;
  int n_layers = 4;
  // Convolution width per layer; layers past the end reuse the last entry.
  std::vector<int> qrnn_widths{2, 1};
  CellKind cell = CellKind::qrnn;
  DropoutProfile dropout;
  bool tie_weights = true;
  int clf_hidden = 50;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  void validate() const;
  int width(int layer) const;
  int layer_input(int layer) const { return layer == 0 ? emb_dim : hidden_dim; }
  // The last layer projects back to emb_dim so the decoder can share the embedding.
  int layer_output(int layer) const { return layer == n_layers - 1 ? emb_dim : hidden_dim; }
  // Embedding, one group per recurrent layer, then decoder bias / head.
  int n_groups() const { return n_layers + 2; }

  // Names of the architecture fields that differ; empty when encoders are compatible.
  std::vector<std::string> encoder_mismatches(const ModelConfig& other) const;
};

// Per-layer carried state. Held as plain tensors, so every BPTT window
// starts from a constant: gradients never cross a window boundary.
template <typename Scalar>
struct RecurrentState {
  std::vector<Tensor<Scalar>> c;
  std::vector<Tensor<Scalar>> h;  // LSTM only

  static RecurrentState zeros(const ModelConfig& cfg, Index batch);
  bool empty() const { return c.empty(); }
};

// ---------------------------------------------------------------------------
// Layers

template <typename Scalar>
struct FoPoolResult {
  Var<Scalar> h;       // [T x B x H]
  Var<Scalar> c_last;  // [B x H]
};

// c[t] = f[t]*c[t-1] + (1-f[t])*z[t];  h[t] = o[t]*c[t].
template <typename Scalar>
FoPoolResult<Scalar> fo_pool(Var<Scalar> z, Var<Scalar> f, Var<Scalar> o, Var<Scalar> c0);

// One QRNN layer. weight: [width x Din x 3H] producing the Z, F, O gate
// pre-activations from one shared causal window. `zoneout_keep` (optional,
// [T x B x H] of 0/1) forces F to 1 where it is 0.
template <typename Scalar>
FoPoolResult<Scalar> qrnn_layer_forward(Var<Scalar> x, Var<Scalar> weight, Var<Scalar> bias, Var<Scalar> c0,
                                        const Tensor<Scalar>* zoneout_keep = nullptr);

template <typename Scalar>
struct LstmResult {
  Var<Scalar> h;       // [T x B x H]
  Var<Scalar> h_last;  // [B x H]
  Var<Scalar> c_last;  // [B x H]
};

// Standard LSTM, gates ordered (input, forget, cell, output).
// w_ih: [Din x 4H], w_hh: [H x 4H], bias: [4H].
template <typename Scalar>
LstmResult<Scalar> lstm_layer_forward(Var<Scalar> x, Var<Scalar> w_ih, Var<Scalar> w_hh, Var<Scalar> bias,
                                      Var<Scalar> h0, Var<Scalar> c0);

// ---------------------------------------------------------------------------
// Language model

// Embedding uniform in +-0.1, recurrent weights uniform in +-1/sqrt(fan_in),
// zero biases; "decoder.weight" aliases "encoder.embedding" when tied.
template <typename Scalar>
ParameterSet<Scalar> build_language_model(const ModelConfig& cfg, std::uint64_t seed);

// Closed-form parameter count of build_language_model (tied storage counted once).
Index language_model_parameter_count(const ModelConfig& cfg);

// Token ids are time-major: ids[t * batch + b].
struct TokenBatch {
  std::span<const int> ids;
  Index steps = 0;
  Index batch = 0;
};

template <typename Scalar>
struct EncoderOutput {
  Var<Scalar> h;  // [T x B x emb_dim], last layer
  RecurrentState<Scalar> state;
};

template <typename Scalar>
EncoderOutput<Scalar> encoder_forward(Tape<Scalar>& tape, const ParameterSet<Scalar>& params, const ModelConfig& cfg,
                                      const TokenBatch& batch, const RecurrentState<Scalar>& state, Mode mode,
                                      std::mt19937_64* rng);

template <typename Scalar>
struct LmOutput {
  Var<Scalar> logits;  // [T x B x V]
  RecurrentState<Scalar> state;
};

template <typename Scalar>
LmOutput<Scalar> lm_forward(Tape<Scalar>& tape, const ParameterSet<Scalar>& params, const ModelConfig& cfg,
                            const TokenBatch& batch, const RecurrentState<Scalar>& state, Mode mode,
                            std::mt19937_64* rng = nullptr);

// Mean next-token cross entropy of lm logits [T x B x V] against targets.
template <typename Scalar>
Var<Scalar> lm_loss(Var<Scalar> logits, std::span<const int> targets);

// ---------------------------------------------------------------------------
// Classifier

// Fresh encoder plus head:
// linear(3E -> clf_hidden) -> batch-norm -> ReLU -> dropout -> linear(-> K).
template <typename Scalar>
ParameterSet<Scalar> build_classifier(const ModelConfig& cfg, int n_classes, std::uint64_t seed);

template <typename Scalar>
struct ClassifierOutput {
  Var<Scalar> logits;  // [B x K]
  // Batch statistics in train mode, for the running-average update.
  Vector<Scalar> batch_mean;
  Vector<Scalar> batch_var;
};

template <typename Scalar>
ClassifierOutput<Scalar> classifier_head_forward(Tape<Scalar>& tape, const ParameterSet<Scalar>& params,
                                                 const ModelConfig& cfg, Var<Scalar> pooled, Mode mode,
                                                 std::mt19937_64* rng);

// Encoder from zero state, concat pooling over `lengths`, head.
template <typename Scalar>
ClassifierOutput<Scalar> classifier_forward(Tape<Scalar>& tape, const ParameterSet<Scalar>& params,
                                            const ModelConfig& cfg, const TokenBatch& batch,
                                            std::span<const Index> lengths, Mode mode, std::mt19937_64* rng = nullptr);

// Exponential running average of batch-norm statistics (unbiased variance).
template <typename Scalar>
void update_batch_norm_statistics(ParameterSet<Scalar>& params, const ModelConfig& cfg,
                                  const ClassifierOutput<Scalar>& out, Index batch);

// Copies every "encoder." tensor from an LM into a classifier.
template <typename Scalar>
void transfer_encoder(const ParameterSet<Scalar>& lm, const ModelConfig& lm_cfg, ParameterSet<Scalar>& classifier,
                      const ModelConfig& clf_cfg);

}  // namespace multifit
