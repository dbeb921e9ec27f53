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
#include "multifit/network.hpp"

#include <cmath>

#include "multifit/errors.hpp"

namespace multifit {

std::string to_string(CellKind kind) { return kind == CellKind::qrnn ? "qrnn" : "lstm"; }

CellKind cell_kind_from_string(std::string_view name) {
  if (name == "qrnn") return CellKind::qrnn;
  if (name == "lstm") return CellKind::lstm;
  throw ConfigError("unknown cell kind '" + std::string(name) + "' (expected qrnn or lstm)");
}

void ModelConfig::validate() const {
  if (vocab_size < 1) throw ConfigError("model.vocab_size must be >= 1");
  if (emb_dim < 1) throw ConfigError("model.emb_dim must be >= 1");
  if (hidden_dim < 1) throw ConfigError("model.hidden_dim must be >= 1");
  if (n_layers < 1) throw ConfigError("model.n_layers must be >= 1");
  if (qrnn_widths.empty()) throw ConfigError("model.qrnn_widths must name at least one width");
  for (int w : qrnn_widths)
    if (w < 1) throw ConfigError("model.qrnn_widths: width " + std::to_string(w) + " < 1");
  if (clf_hidden < 1) throw ConfigError("model.clf_hidden must be >= 1");
  if (!(bn_momentum > 0 && bn_momentum <= 1)) throw ConfigError("model.bn_momentum must lie in (0,1]");
  const double rates[] = {dropout.embedding, dropout.input, dropout.hidden, dropout.output};
  for (double r : rates)
    if (!(r >= 0 && r * dropout.multiplier < 1))
      throw ConfigError("dropout rates must satisfy 0 <= rate * multiplier < 1");
  if (dropout.multiplier < 0) throw ConfigError("dropout multiplier must be >= 0");
}

int ModelConfig::width(int layer) const {
  if (qrnn_widths.empty()) return 1;
  const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(layer), qrnn_widths.size() - 1);
  return qrnn_widths[i];
}

std::vector<std::string> ModelConfig::encoder_mismatches(const ModelConfig& o) const {
  std::vector<std::string> out;
  if (vocab_size != o.vocab_size) out.push_back("vocab_size");
  if (emb_dim != o.emb_dim) out.push_back("emb_dim");
  if (hidden_dim != o.hidden_dim) out.push_back("hidden_dim");
  if (n_layers != o.n_layers) out.push_back("n_layers");
  if (cell != o.cell) out.push_back("cell");
  if (cell == CellKind::qrnn && n_layers == o.n_layers) {
    for (int l = 0; l < n_layers; ++l)
      if (width(l) != o.width(l)) {
        out.push_back("qrnn_widths");
        break;
      }
  }
  return out;
}

template <typename Scalar>
RecurrentState<Scalar> RecurrentState<Scalar>::zeros(const ModelConfig& cfg, Index batch) {
  RecurrentState s;
  for (int l = 0; l < cfg.n_layers; ++l) {
    s.c.push_back(Tensor<Scalar>::zeros({batch, cfg.layer_output(l)}));
    if (cfg.cell == CellKind::lstm) s.h.push_back(Tensor<Scalar>::zeros({batch, cfg.layer_output(l)}));
  }
  return s;
}

// ---------------------------------------------------------------------------

template <typename Scalar>
FoPoolResult<Scalar> fo_pool(Var<Scalar> z, Var<Scalar> f, Var<Scalar> o, Var<Scalar> c0) {
  if (o.shape() != z.shape())
    throw DimensionError("fo_pool: output gate " + shape_string(o.shape()) + " vs candidate " +
                         shape_string(z.shape()));
  Var<Scalar> c = forget_mult(z, f, c0);
  return {mul(o, c), time_step(c, z.dim(0) - 1)};
}

template <typename Scalar>
FoPoolResult<Scalar> qrnn_layer_forward(Var<Scalar> x, Var<Scalar> weight, Var<Scalar> bias, Var<Scalar> c0,
                                        const Tensor<Scalar>* zoneout_keep) {
  const auto& ws = weight.shape();
  if (x.value().rank() != 3 || ws.size() != 3 || c0.value().rank() != 2)
    throw ConfigError("qrnn layer: expected x [T x B x Din], weight [width x Din x 3H], state [B x H]");
  const Index H = c0.dim(1);
  if (ws[1] != x.dim(2) || ws[2] != 3 * H || bias.value().size() != 3 * H || c0.dim(0) != x.dim(1))
    throw ConfigError("qrnn layer: input " + shape_string(x.shape()) + ", weight " + shape_string(ws) +
                      ", bias " + shape_string(bias.shape()) + ", state " + shape_string(c0.shape()) +
                      " do not agree");
  Var<Scalar> gates = causal_conv_over_time(x, weight, bias);
  Var<Scalar> z = tanh(slice_last(gates, 0, H));
  Var<Scalar> f = sigmoid(slice_last(gates, H, H));
  Var<Scalar> o = sigmoid(slice_last(gates, 2 * H, H));
  if (zoneout_keep) {
    if (zoneout_keep->shape() != f.shape())
      throw ConfigError("qrnn layer: zoneout mask " + shape_string(zoneout_keep->shape()) + " vs gates " +
                        shape_string(f.shape()));
    // Dropped channels keep their previous cell: f -> 1.
    Tensor<Scalar> shift(zoneout_keep->shape());
    shift.vec() = Vector<Scalar>::Ones(shift.size()) - zoneout_keep->vec();
    f = affine_const(f, *zoneout_keep, shift);
  }
  return fo_pool(z, f, o, c0);
}

template <typename Scalar>
LstmResult<Scalar> lstm_layer_forward(Var<Scalar> x, Var<Scalar> w_ih, Var<Scalar> w_hh, Var<Scalar> bias,
                                      Var<Scalar> h0, Var<Scalar> c0) {
  if (x.value().rank() != 3 || h0.value().rank() != 2 || c0.shape() != h0.shape())
    throw ConfigError("lstm layer: expected x [T x B x Din] and states [B x H]");
  const Index T = x.dim(0), B = x.dim(1), Din = x.dim(2), H = h0.dim(1);
  if (w_ih.shape() != Shape{Din, 4 * H} || w_hh.shape() != Shape{H, 4 * H} || bias.value().size() != 4 * H ||
      h0.dim(0) != B)
    throw ConfigError("lstm layer: input " + shape_string(x.shape()) + ", w_ih " + shape_string(w_ih.shape()) +
                      ", w_hh " + shape_string(w_hh.shape()) + ", state " + shape_string(h0.shape()) +
                      " do not agree");
  Var<Scalar> xw = reshape(add_bias(matmul(reshape(x, {T * B, Din}), w_ih), bias), {T, B, 4 * H});
  Var<Scalar> h = h0, c = c0;
  std::vector<Var<Scalar>> outputs;
  outputs.reserve(static_cast<std::size_t>(T));
  for (Index t = 0; t < T; ++t) {
    Var<Scalar> g = add(time_step(xw, t), matmul(h, w_hh));
    Var<Scalar> i = sigmoid(slice_last(g, 0, H));
    Var<Scalar> f = sigmoid(slice_last(g, H, H));
    Var<Scalar> cand = tanh(slice_last(g, 2 * H, H));
    Var<Scalar> o = sigmoid(slice_last(g, 3 * H, H));
    c = add(mul(f, c), mul(i, cand));
    h = mul(o, tanh(c));
    outputs.push_back(h);
  }
  return {stack_time(outputs), h, c};
}

// ---------------------------------------------------------------------------

namespace {

std::string layer_name(int l, const char* what) { return "encoder.layer" + std::to_string(l) + "." + what; }

template <typename Scalar>
void add_encoder(ParameterSet<Scalar>& p, const ModelConfig& cfg, std::mt19937_64& rng) {
  const Index V = cfg.vocab_size, E = cfg.emb_dim;
  p.add("encoder.embedding", Tensor<Scalar>::uniform({V, E}, Scalar(-0.1), Scalar(0.1), rng), 0);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const Index Din = cfg.layer_input(l), H = cfg.layer_output(l);
    if (cfg.cell == CellKind::qrnn) {
      const Index W = cfg.width(l);
      const Scalar bound = Scalar(1) / std::sqrt(static_cast<Scalar>(W * Din));
      p.add(layer_name(l, "weight"), Tensor<Scalar>::uniform({W, Din, 3 * H}, -bound, bound, rng), l + 1);
      p.add(layer_name(l, "bias"), Tensor<Scalar>::zeros({3 * H}), l + 1);
    } else {
      const Scalar bound = Scalar(1) / std::sqrt(static_cast<Scalar>(H));
      p.add(layer_name(l, "w_ih"), Tensor<Scalar>::uniform({Din, 4 * H}, -bound, bound, rng), l + 1);
      p.add(layer_name(l, "w_hh"), Tensor<Scalar>::uniform({H, 4 * H}, -bound, bound, rng), l + 1);
      p.add(layer_name(l, "bias"), Tensor<Scalar>::zeros({4 * H}), l + 1);
    }
  }
}

template <typename Scalar>
Tensor<Scalar> bernoulli_keep(Shape shape, double rate, bool rescale, std::mt19937_64& rng) {
  Tensor<Scalar> m(std::move(shape));
  std::bernoulli_distribution keep(1.0 - rate);
  const Scalar on = rescale ? static_cast<Scalar>(1.0 / (1.0 - rate)) : Scalar(1);
  for (Index i = 0; i < m.size(); ++i) m[i] = keep(rng) ? on : Scalar(0);
  return m;
}

// Same [B x D] mask at every time step.
template <typename Scalar>
Var<Scalar> variational_dropout(Var<Scalar> x, double rate, std::mt19937_64& rng) {
  const Index T = x.dim(0), B = x.dim(1), D = x.dim(2);
  Tensor<Scalar> step = bernoulli_keep<Scalar>({B, D}, rate, true, rng);
  Tensor<Scalar> mask({T, B, D});
  for (Index t = 0; t < T; ++t) mask.vec().segment(t * B * D, B * D) = step.vec();
  return mul_const(x, mask);
}

struct DropoutRates {
  double embedding = 0, input = 0, hidden = 0, output = 0;
};

DropoutRates active_rates(const ModelConfig& cfg, Mode mode, const void* rng) {
  if (mode == Mode::eval) return {};
  const auto& d = cfg.dropout;
  DropoutRates r{d.embedding * d.multiplier, d.input * d.multiplier, d.hidden * d.multiplier,
                 d.output * d.multiplier};
  const bool any = r.embedding > 0 || r.input > 0 || r.hidden > 0 || r.output > 0;
  if (any && !rng) throw ContractError("training-mode dropout needs a random generator");
  return r;
}

void check_batch(const ModelConfig& cfg, const TokenBatch& batch) {
  if (batch.steps < 1 || batch.batch < 1) throw ContractError("token batch must be non-empty");
  if (static_cast<Index>(batch.ids.size()) != batch.steps * batch.batch)
    throw ContractError("token batch: " + std::to_string(batch.ids.size()) + " ids for " +
                        std::to_string(batch.steps) + " x " + std::to_string(batch.batch) + " positions");
  for (int id : batch.ids)
    if (id < 0 || id >= cfg.vocab_size)
      throw ContractError("token id " + std::to_string(id) + " outside vocabulary of " +
                          std::to_string(cfg.vocab_size));
}

}  // namespace

Index language_model_parameter_count(const ModelConfig& cfg) {
  const Index V = cfg.vocab_size, E = cfg.emb_dim;
  Index n = V * E + V;
  if (!cfg.tie_weights) n += V * E;
  for (int l = 0; l < cfg.n_layers; ++l) {
    const Index Din = cfg.layer_input(l), H = cfg.layer_output(l);
    if (cfg.cell == CellKind::qrnn)
      n += cfg.width(l) * Din * 3 * H + 3 * H;
    else
      n += Din * 4 * H + H * 4 * H + 4 * H;
  }
  return n;
}

template <typename Scalar>
ParameterSet<Scalar> build_language_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ParameterSet<Scalar> p;
  add_encoder(p, cfg, rng);
  const int head_group = cfg.n_groups() - 1;
  if (cfg.tie_weights)
    p.tie("decoder.weight", "encoder.embedding");
  else
    p.add("decoder.weight",
          Tensor<Scalar>::uniform({cfg.vocab_size, cfg.emb_dim}, Scalar(-0.1), Scalar(0.1), rng), head_group);
  p.add("decoder.bias", Tensor<Scalar>::zeros({cfg.vocab_size}), head_group);
  return p;
}

template <typename Scalar>
EncoderOutput<Scalar> encoder_forward(Tape<Scalar>& tape, const ParameterSet<Scalar>& params, const ModelConfig& cfg,
                                      const TokenBatch& batch, const RecurrentState<Scalar>& state, Mode mode,
                                      std::mt19937_64* rng) {
  check_batch(cfg, batch);
  const DropoutRates rates = active_rates(cfg, mode, rng);
  const Index T = batch.steps, B = batch.batch, E = cfg.emb_dim;
  const bool lstm = cfg.cell == CellKind::lstm;

  RecurrentState<Scalar> init = state.empty() ? RecurrentState<Scalar>::zeros(cfg, B) : state;
  if (static_cast<int>(init.c.size()) != cfg.n_layers || (lstm && init.h.size() != init.c.size()))
    throw ConfigError("recurrent state has " + std::to_string(init.c.size()) + " layers, model has " +
                      std::to_string(cfg.n_layers));

  Var<Scalar> x = embedding(tape.parameter(params, "encoder.embedding"), batch.ids);
  if (rates.embedding > 0) {
    // Whole vocabulary rows are dropped, consistently within the batch.
    Tensor<Scalar> keep = bernoulli_keep<Scalar>({cfg.vocab_size}, rates.embedding, true, *rng);
    Tensor<Scalar> mask({T * B, E});
    for (Index i = 0; i < T * B; ++i) mask.as_rows().row(i).setConstant(keep[batch.ids[i]]);
    x = mul_const(x, mask);
  }
  x = reshape(x, {T, B, E});

  EncoderOutput<Scalar> out;
  for (int l = 0; l < cfg.n_layers; ++l) {
    if (rates.input > 0) x = variational_dropout(x, rates.input, *rng);
    const Index H = cfg.layer_output(l);
    if (init.c[l].shape() != Shape{B, H})
      throw ConfigError("recurrent state of layer " + std::to_string(l) + " is " + shape_string(init.c[l].shape()) +
                        ", expected " + shape_string({B, H}));
    Var<Scalar> c0 = tape.constant(init.c[l]);
    if (!lstm) {
      Tensor<Scalar> keep;
      if (rates.hidden > 0) keep = bernoulli_keep<Scalar>({T, B, H}, rates.hidden, false, *rng);
      auto r = qrnn_layer_forward(x, tape.parameter(params, layer_name(l, "weight")),
                                  tape.parameter(params, layer_name(l, "bias")), c0,
                                  rates.hidden > 0 ? &keep : nullptr);
      x = r.h;
      out.state.c.push_back(r.c_last.value());
    } else {
      Var<Scalar> h0 = tape.constant(init.h[l]);
      auto r = lstm_layer_forward(x, tape.parameter(params, layer_name(l, "w_ih")),
                                  tape.parameter(params, layer_name(l, "w_hh")),
                                  tape.parameter(params, layer_name(l, "bias")), h0, c0);
      x = r.h;
      out.state.c.push_back(r.c_last.value());
      out.state.h.push_back(r.h_last.value());
    }
  }
  if (rates.output > 0) x = variational_dropout(x, rates.output, *rng);
  out.h = x;
  return out;
}

template <typename Scalar>
LmOutput<Scalar> lm_forward(Tape<Scalar>& tape, const ParameterSet<Scalar>& params, const ModelConfig& cfg,
                            const TokenBatch& batch, const RecurrentState<Scalar>& state, Mode mode,
                            std::mt19937_64* rng) {
  auto enc = encoder_forward(tape, params, cfg, batch, state, mode, rng);
  const Index T = batch.steps, B = batch.batch;
  Var<Scalar> h = reshape(enc.h, {T * B, static_cast<Index>(cfg.emb_dim)});
  Var<Scalar> logits =
      add_bias(matmul_nt(h, tape.parameter(params, "decoder.weight")), tape.parameter(params, "decoder.bias"));
  return {reshape(logits, {T, B, static_cast<Index>(cfg.vocab_size)}), std::move(enc.state)};
}

template <typename Scalar>
Var<Scalar> lm_loss(Var<Scalar> logits, std::span<const int> targets) {
  if (logits.value().rank() != 3) throw DimensionError("lm_loss: logits must be [T x B x V]");
  const Index V = logits.dim(2);
  return cross_entropy(reshape(logits, {logits.value().size() / V, V}), targets);
}

// ---------------------------------------------------------------------------

template <typename Scalar>
ParameterSet<Scalar> build_classifier(const ModelConfig& cfg, int n_classes, std::uint64_t seed) {
  cfg.validate();
  if (n_classes < 2) throw ConfigError("classifier needs at least 2 classes, got " + std::to_string(n_classes));
  std::mt19937_64 rng(seed);
  ParameterSet<Scalar> p;
  add_encoder(p, cfg, rng);
  const int g = cfg.n_groups() - 1;
  const Index in = 3 * static_cast<Index>(cfg.emb_dim), C = cfg.clf_hidden, K = n_classes;
  const Scalar b0 = Scalar(1) / std::sqrt(static_cast<Scalar>(in));
  const Scalar b1 = Scalar(1) / std::sqrt(static_cast<Scalar>(C));
  p.add("head.linear0.weight", Tensor<Scalar>::uniform({in, C}, -b0, b0, rng), g);
  p.add("head.linear0.bias", Tensor<Scalar>::zeros({C}), g);
  p.add("head.bn.gamma", Tensor<Scalar>::constant({C}, Scalar(1)), g);
  p.add("head.bn.beta", Tensor<Scalar>::zeros({C}), g);
  p.add("head.bn.running_mean", Tensor<Scalar>::zeros({C}), g, false);
  p.add("head.bn.running_var", Tensor<Scalar>::constant({C}, Scalar(1)), g, false);
  p.add("head.linear1.weight", Tensor<Scalar>::uniform({C, K}, -b1, b1, rng), g);
  p.add("head.linear1.bias", Tensor<Scalar>::zeros({K}), g);
  return p;
}

template <typename Scalar>
ClassifierOutput<Scalar> classifier_head_forward(Tape<Scalar>& tape, const ParameterSet<Scalar>& params,
                                                 const ModelConfig& cfg, Var<Scalar> pooled, Mode mode,
                                                 std::mt19937_64* rng) {
  const Tensor<Scalar>& w0 = params["head.linear0.weight"];
  if (pooled.value().rank() != 2 || pooled.dim(1) != w0.dim(0))
    throw ConfigError("classifier head: pooled features " + shape_string(pooled.shape()) +
                      " do not match first layer " + shape_string(w0.shape()));
  const DropoutRates rates = active_rates(cfg, mode, rng);
  const Scalar eps = static_cast<Scalar>(cfg.bn_eps);

  ClassifierOutput<Scalar> out;
  Var<Scalar> z = add_bias(matmul(pooled, tape.parameter(params, "head.linear0.weight")),
                           tape.parameter(params, "head.linear0.bias"));
  Var<Scalar> gamma = tape.parameter(params, "head.bn.gamma");
  Var<Scalar> beta = tape.parameter(params, "head.bn.beta");
  if (mode == Mode::train) {
    auto bn = batch_norm_train(z, gamma, beta, eps);
    z = bn.y;
    out.batch_mean = std::move(bn.batch_mean);
    out.batch_var = std::move(bn.batch_var);
  } else {
    z = batch_norm_eval(z, gamma, beta, params["head.bn.running_mean"], params["head.bn.running_var"], eps);
  }
  z = relu(z);
  if (rates.output > 0) z = mul_const(z, bernoulli_keep<Scalar>(z.shape(), rates.output, true, *rng));
  out.logits = add_bias(matmul(z, tape.parameter(params, "head.linear1.weight")),
                        tape.parameter(params, "head.linear1.bias"));
  return out;
}

template <typename Scalar>
ClassifierOutput<Scalar> classifier_forward(Tape<Scalar>& tape, const ParameterSet<Scalar>& params,
                                            const ModelConfig& cfg, const TokenBatch& batch,
                                            std::span<const Index> lengths, Mode mode, std::mt19937_64* rng) {
  auto enc = encoder_forward(tape, params, cfg, batch, RecurrentState<Scalar>{}, mode, rng);
  return classifier_head_forward(tape, params, cfg, concat_pool(enc.h, lengths), mode, rng);
}

template <typename Scalar>
void update_batch_norm_statistics(ParameterSet<Scalar>& params, const ModelConfig& cfg,
                                  const ClassifierOutput<Scalar>& out, Index batch) {
  if (out.batch_mean.size() == 0 || batch < 2) return;
  const Scalar m = static_cast<Scalar>(cfg.bn_momentum);
  const Scalar unbias = static_cast<Scalar>(batch) / static_cast<Scalar>(batch - 1);
  auto& rm = params["head.bn.running_mean"].vec();
  auto& rv = params["head.bn.running_var"].vec();
  rm = (Scalar(1) - m) * rm + m * out.batch_mean;
  rv = (Scalar(1) - m) * rv + m * unbias * out.batch_var;
}

template <typename Scalar>
void transfer_encoder(const ParameterSet<Scalar>& lm, const ModelConfig& lm_cfg, ParameterSet<Scalar>& classifier,
                      const ModelConfig& clf_cfg) {
  const auto diff = lm_cfg.encoder_mismatches(clf_cfg);
  if (!diff.empty()) {
    std::string fields;
    for (const auto& f : diff) fields += (fields.empty() ? "" : ", ") + f;
    throw TransferError("language model and classifier encoders differ in: " + fields);
  }
  for (const auto& e : lm) {
    if (e.name.rfind("encoder.", 0) != 0) continue;
    if (!classifier.contains(e.name)) throw TransferError("classifier has no parameter '" + e.name + "'");
    Tensor<Scalar>& dst = classifier[e.name];
    if (dst.shape() != e.value.shape())
      throw TransferError("parameter '" + e.name + "' is " + shape_string(e.value.shape()) + " in the LM but " +
                          shape_string(dst.shape()) + " in the classifier");
    dst = e.value;
  }
}

#define MULTIFIT_INSTANTIATE_NETWORK(S)                                                                          \
  template struct RecurrentState<S>;                                                                             \
  template FoPoolResult<S> fo_pool(Var<S>, Var<S>, Var<S>, Var<S>);                                              \
  template FoPoolResult<S> qrnn_layer_forward(Var<S>, Var<S>, Var<S>, Var<S>, const Tensor<S>*);                 \
  template LstmResult<S> lstm_layer_forward(Var<S>, Var<S>, Var<S>, Var<S>, Var<S>, Var<S>);                     \
  template ParameterSet<S> build_language_model<S>(const ModelConfig&, std::uint64_t);                           \
  template EncoderOutput<S> encoder_forward(Tape<S>&, const ParameterSet<S>&, const ModelConfig&,                \
                                            const TokenBatch&, const RecurrentState<S>&, Mode, std::mt19937_64*); \
  template LmOutput<S> lm_forward(Tape<S>&, const ParameterSet<S>&, const ModelConfig&, const TokenBatch&,       \
                                  const RecurrentState<S>&, Mode, std::mt19937_64*);                             \
  template Var<S> lm_loss(Var<S>, std::span<const int>);                                                         \
  template ParameterSet<S> build_classifier<S>(const ModelConfig&, int, std::uint64_t);                          \
  template ClassifierOutput<S> classifier_head_forward(Tape<S>&, const ParameterSet<S>&, const ModelConfig&,     \
                                                       Var<S>, Mode, std::mt19937_64*);                          \
  template ClassifierOutput<S> classifier_forward(Tape<S>&, const ParameterSet<S>&, const ModelConfig&,          \
                                                  const TokenBatch&, std::span<const Index>, Mode,               \
                                                  std::mt19937_64*);                                             \
  template void update_batch_norm_statistics(ParameterSet<S>&, const ModelConfig&, const ClassifierOutput<S>&,   \
                                             Index);                                                             \
  template void transfer_encoder(const ParameterSet<S>&, const ModelConfig&, ParameterSet<S>&, const ModelConfig&);

MULTIFIT_INSTANTIATE_NETWORK(float)
MULTIFIT_INSTANTIATE_NETWORK(double)

}  // namespace multifit
