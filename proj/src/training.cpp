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
#include "multifit/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "multifit/errors.hpp"

namespace multifit {

void ScheduleConfig::validate() const {
  if (total_steps < 1) throw ConfigError("schedule.total_steps must be >= 1");
  if (!(lr_max > 0)) throw ConfigError("schedule.lr_max must be positive");
  if (!(pct_warmup > 0 && pct_warmup < 1)) throw ConfigError("schedule.pct_warmup must lie in (0,1)");
  if (!(div_start > 1)) throw ConfigError("schedule.div_start must be > 1");
  if (!(div_final > 1)) throw ConfigError("schedule.div_final must be > 1");
  if (!(mom_min >= 0 && mom_min < 1 && mom_max >= 0 && mom_max < 1))
    throw ConfigError("schedule momenta must lie in [0,1)");
}

double cosine_interpolate(double a, double b, double u) {
  return b + (a - b) * (1.0 + std::cos(std::numbers::pi * u)) / 2.0;
}

ScheduleValue one_cycle_cosine(Index step, const ScheduleConfig& cfg) {
  if (step < 0 || step > cfg.total_steps)
    throw ContractError("one_cycle_cosine: step " + std::to_string(step) + " outside [0, " +
                        std::to_string(cfg.total_steps) + "]");
  const double total = static_cast<double>(cfg.total_steps);
  const double peak = cfg.pct_warmup * total;
  const double s = static_cast<double>(step);
  if (s <= peak) {
    const double u = s / peak;
    return {cosine_interpolate(cfg.lr_max / cfg.div_start, cfg.lr_max, u),
            cosine_interpolate(cfg.mom_max, cfg.mom_min, u)};
  }
  const double u = (s - peak) / (total - peak);
  return {cosine_interpolate(cfg.lr_max, cfg.lr_max / cfg.div_final, u),
          cosine_interpolate(cfg.mom_min, cfg.mom_max, u)};
}

std::vector<double> discriminative_lr_groups(double base_lr, int n_groups, double factor) {
  if (n_groups < 1) throw ContractError("discriminative_lr_groups: need at least one group");
  if (!(factor >= 1)) throw ContractError("discriminative_lr_groups: factor must be >= 1");
  std::vector<double> lrs(static_cast<std::size_t>(n_groups));
  for (int g = 0; g < n_groups; ++g) lrs[g] = base_lr / std::pow(factor, n_groups - 1 - g);
  return lrs;
}

template <typename Scalar>
Var<Scalar> label_smoothed_loss(Var<Scalar> logits, std::span<const int> targets, double eps) {
  if (logits.value().rank() != 2 || logits.dim(1) < 2)
    throw ContractError("label_smoothed_loss: logits must be [B x K] with K >= 2, got " +
                        shape_string(logits.shape()));
  return cross_entropy(logits, targets, static_cast<Scalar>(eps));
}

template Var<float> label_smoothed_loss(Var<float>, std::span<const int>, double);
template Var<double> label_smoothed_loss(Var<double>, std::span<const int>, double);

// ---------------------------------------------------------------------------

Index BpttBatches::token_count() const {
  Index n = 0;
  for (const auto& w : windows) n += w.steps * batch;
  return n;
}

BpttBatches bptt_batchify(std::span<const int> stream, Index batch, Index bptt) {
  if (batch < 1 || bptt < 1) throw ConfigError("bptt_batchify: batch and bptt must be >= 1");
  const Index n = static_cast<Index>(stream.size());
  if (n < 2 * batch)
    throw DataError("token stream of " + std::to_string(n) + " tokens is too short for batch " +
                    std::to_string(batch) + " (need at least " + std::to_string(2 * batch) + ")");
  BpttBatches out;
  out.batch = batch;
  out.strip_length = n / batch;
  out.dropped_tokens = n - batch * out.strip_length;
  const Index L = out.strip_length;
  for (Index i = 0; i + 1 < L; i += bptt) {
    BpttWindow w;
    w.steps = std::min(bptt, L - 1 - i);
    w.input.resize(static_cast<std::size_t>(w.steps * batch));
    w.target.resize(w.input.size());
    for (Index t = 0; t < w.steps; ++t)
      for (Index b = 0; b < batch; ++b) {
        w.input[t * batch + b] = stream[b * L + i + t];
        w.target[t * batch + b] = stream[b * L + i + t + 1];
      }
    out.windows.push_back(std::move(w));
  }
  return out;
}

// ---------------------------------------------------------------------------

void LabeledDataset::validate() const {
  const int K = n_classes();
  if (K < 2) throw DataError("dataset '" + split + "' needs at least 2 classes, has " + std::to_string(K));
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& e = examples[i];
    if (e.label < 0 || e.label >= K)
      throw DataError("dataset '" + split + "' example " + std::to_string(i + 1) + ": class id " +
                      std::to_string(e.label) + " outside [0," + std::to_string(K) + ")");
    if (e.text.find_first_not_of(" \t\r\n") == std::string::npos)
      throw DataError("dataset '" + split + "' example " + std::to_string(i + 1) + " has empty text");
  }
}

EncodedDataset encode_dataset(const LabeledDataset& data, const tok::TokenizerModel& tokenizer, Index max_tokens) {
  data.validate();
  EncodedDataset out;
  out.n_classes = data.n_classes();
  out.examples.reserve(data.examples.size());
  for (std::size_t i = 0; i < data.examples.size(); ++i) {
    EncodedExample e{tokenizer.encode_ids(data.examples[i].text), data.examples[i].label};
    if (e.ids.empty())
      throw DataError("dataset '" + data.split + "' example " + std::to_string(i + 1) + " tokenizes to nothing");
    if (max_tokens > 0 && static_cast<Index>(e.ids.size()) > max_tokens) e.ids.resize(max_tokens);
    out.examples.push_back(std::move(e));
  }
  return out;
}

std::vector<int> encode_corpus(std::span<const std::string> lines, const tok::TokenizerModel& tokenizer) {
  std::vector<int> stream;
  for (const auto& line : lines) {
    const auto ids = tokenizer.encode_ids(line);
    if (ids.empty()) continue;
    stream.insert(stream.end(), ids.begin(), ids.end());
    stream.push_back(tokenizer.eos_id());
  }
  return stream;
}

CorpusSplit split_corpus(std::span<const std::string> lines, double valid_fraction) {
  if (!(valid_fraction > 0 && valid_fraction < 1)) throw ConfigError("valid_fraction must lie in (0,1)");
  std::vector<std::string> kept;
  for (const auto& l : lines)
    if (l.find_first_not_of(" \t\r\n") != std::string::npos) kept.push_back(l);
  if (kept.size() < 2) throw DataError("corpus has " + std::to_string(kept.size()) + " non-empty lines, need 2");
  const std::size_t n_valid =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(valid_fraction * kept.size())));
  const std::size_t n_train = kept.size() - std::min(n_valid, kept.size() - 1);
  CorpusSplit s;
  s.train.assign(kept.begin(), kept.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.valid.assign(kept.begin() + static_cast<std::ptrdiff_t>(n_train), kept.end());
  return s;
}

void check_vocab_compatible(const ModelConfig& model, const tok::TokenizerModel& tokenizer) {
  if (tokenizer.size() != model.vocab_size)
    throw TransferError("tokenizer has " + std::to_string(tokenizer.size()) + " pieces but the model vocabulary is " +
                        std::to_string(model.vocab_size));
}

namespace {

void check_params_match(const ParameterSet<float>& params, const ModelConfig& model) {
  const Shape want{model.vocab_size, model.emb_dim};
  if (!params.contains("encoder.embedding") || params["encoder.embedding"].shape() != want)
    throw TransferError("checkpoint embedding " +
                        (params.contains("encoder.embedding") ? shape_string(params["encoder.embedding"].shape())
                                                              : std::string("missing")) +
                        " does not match model " + shape_string(want));
}

std::uint64_t name_stream(std::string_view name) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : name) h = (h ^ c) * 1099511628211ULL;
  return h;
}

std::vector<double> entry_multipliers(const ParameterSet<float>& params, int n_groups, double factor) {
  const auto groups = discriminative_lr_groups(1.0, n_groups, factor);
  return lrs_for_groups(params, std::span<const double>(groups));
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

void TrainConfig::validate() const {
  if (bptt < 1 || lm_batch < 1 || clf_batch < 1) throw ConfigError("train: bptt and batch sizes must be >= 1");
  if (pretrain_epochs < 0 || finetune_epochs < 0 || clf_epochs < 0)
    throw ConfigError("train: epoch counts must be >= 0");
  if (!(pretrain_lr > 0 && finetune_lr > 0 && clf_lr > 0)) throw ConfigError("train: learning rates must be positive");
  if (!(weight_decay >= 0)) throw ConfigError("train.weight_decay must be >= 0");
  if (!(label_smooth_eps >= 0 && label_smooth_eps < 1)) throw ConfigError("train.label_smooth_eps must lie in [0,1)");
  if (!(disc_factor >= 1)) throw ConfigError("train.disc_factor must be >= 1");
  if (!(pretrain_dropout >= 0 && finetune_dropout >= 0 && clf_dropout >= 0))
    throw ConfigError("train: dropout multipliers must be >= 0");
  if (!(clip_norm >= 0)) throw ConfigError("train.clip_norm must be >= 0");
  if (!(valid_fraction > 0 && valid_fraction < 1)) throw ConfigError("train.valid_fraction must lie in (0,1)");
  if (max_tokens < 0) throw ConfigError("train.max_tokens must be >= 0");
  if (!(adam.beta2 >= 0 && adam.beta2 < 1)) throw ConfigError("optim.beta2 must lie in [0,1)");
  if (!(adam.eps > 0)) throw ConfigError("optim.eps must be positive");
  ScheduleConfig s = schedule;
  s.total_steps = 1;
  s.lr_max = 1;
  s.validate();
}

std::mt19937_64 step_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t step) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32)};
  return std::mt19937_64(seq);
}

// ---------------------------------------------------------------------------

LmStageSpec pretrain_stage(const TrainConfig& cfg) {
  return {"lm-pretrain", cfg.pretrain_epochs, cfg.pretrain_lr, cfg.pretrain_dropout, 1.0};
}

LmStageSpec finetune_stage(const TrainConfig& cfg) {
  return {"lm-finetune", cfg.finetune_epochs, cfg.finetune_lr, cfg.finetune_dropout, cfg.disc_factor};
}

LmEvaluation evaluate_language_model(const ParameterSet<float>& params, const ModelConfig& cfg,
                                     std::span<const int> stream, Index batch, Index bptt) {
  const Index n = static_cast<Index>(stream.size());
  if (n < 2) throw DataError("validation stream needs at least 2 tokens");
  const BpttBatches b = bptt_batchify(stream, std::max<Index>(1, std::min(batch, n / 2)), bptt);
  RecurrentState<float> state;
  double total = 0;
  for (const auto& w : b.windows) {
    Tape<float> tape;
    auto out = lm_forward(tape, params, cfg, TokenBatch{w.input, w.steps, b.batch}, state, Mode::eval);
    total += static_cast<double>(lm_loss(out.logits, std::span<const int>(w.target)).value().item()) *
             static_cast<double>(w.steps * b.batch);
    state = std::move(out.state);
  }
  LmEvaluation e;
  e.tokens = b.token_count();
  e.loss = total / static_cast<double>(e.tokens);
  e.perplexity = std::exp(e.loss);
  return e;
}

LmTrainer::LmTrainer(ModelConfig model, TrainConfig train, LmStageSpec stage, ParameterSet<float> params,
                     std::vector<int> train_stream, std::vector<int> valid_stream, std::uint64_t seed)
    : model_(std::move(model)),
      train_(std::move(train)),
      stage_(std::move(stage)),
      params_(std::move(params)),
      valid_(std::move(valid_stream)),
      seed_(seed),
      start_(std::chrono::steady_clock::now()) {
  train_.validate();
  model_.dropout.multiplier = stage_.dropout;
  model_.validate();
  check_params_match(params_, model_);
  if (stage_.epochs < 0) throw ConfigError("stage '" + stage_.name + "' has a negative epoch count");
  if (train_stream.empty()) throw DataError("empty training corpus");
  if (valid_.size() < 2) throw DataError("validation corpus needs at least 2 tokens");
  batches_ = bptt_batchify(train_stream, train_.lm_batch, train_.bptt);
  schedule_ = train_.schedule;
  schedule_.total_steps = std::max<Index>(1, stage_.epochs * steps_per_epoch());
  schedule_.lr_max = stage_.lr_max;
  schedule_.validate();
  lrs_ = entry_multipliers(params_, model_.n_groups(), stage_.disc_factor);
  adam_ = Adam<float>(train_.adam);
}

void LmTrainer::resume(int epoch, Adam<float>::State optimizer_state) {
  if (epoch < 0 || epoch > stage_.epochs)
    throw CheckpointError("cannot resume stage '" + stage_.name + "' at epoch " + std::to_string(epoch));
  epoch_ = epoch;
  step_ = static_cast<Index>(epoch) * steps_per_epoch();
  adam_.state() = std::move(optimizer_state);
}

double LmTrainer::train_step() {
  if (done()) throw ContractError("stage '" + stage_.name + "' already finished");
  const Index S = steps_per_epoch();
  const Index w = step_ - static_cast<Index>(epoch_) * S;
  if (w == 0) {
    state_ = RecurrentState<float>{};
    epoch_loss_ = 0;
    epoch_tokens_ = 0;
  }
  const BpttWindow& win = batches_.windows[static_cast<std::size_t>(w)];
  last_sched_ = one_cycle_cosine(step_, schedule_);

  auto rng = step_rng(seed_, name_stream(stage_.name), static_cast<std::uint64_t>(step_));
  Tape<float> tape;
  auto out = lm_forward(tape, params_, model_, TokenBatch{win.input, win.steps, batches_.batch}, state_,
                        Mode::train, &rng);
  Var<float> loss = lm_loss(out.logits, std::span<const int>(win.target));
  const double value = loss.value().item();
  auto grads = tape.backward(loss);
  grads.clip_global_norm(static_cast<float>(train_.clip_norm));
  std::vector<double> lrs(lrs_.size());
  for (std::size_t i = 0; i < lrs.size(); ++i) lrs[i] = lrs_[i] * last_sched_.lr;
  adam_.step(params_, grads, lrs, last_sched_.momentum, train_.weight_decay);
  state_ = std::move(out.state);

  epoch_loss_ += value * static_cast<double>(win.steps * batches_.batch);
  epoch_tokens_ += win.steps * batches_.batch;
  ++step_;
  if (w + 1 == S) {
    last_valid_ = evaluate_language_model(params_, model_, valid_, train_.lm_batch, train_.bptt);
    ++epoch_;
    const double train_loss = epoch_loss_ / static_cast<double>(epoch_tokens_);
    emit({stage_.name, epoch_, step_, "train", train_loss, std::exp(train_loss), std::nullopt, last_sched_.lr,
          last_sched_.momentum, 0});
    emit({stage_.name, epoch_, step_, "valid", last_valid_.loss, last_valid_.perplexity, std::nullopt,
          last_sched_.lr, last_sched_.momentum, 0});
    if (on_epoch_) on_epoch_(*this);
  }
  return value;
}

void LmTrainer::run_epoch() {
  const int target = epoch_ + 1;
  while (epoch_ < target) train_step();
}

void LmTrainer::run() {
  while (!done()) run_epoch();
}

void LmTrainer::emit(MetricRecord r) {
  r.wallclock_ms = elapsed_ms(start_);
  history_.push_back(r);
  if (sink_) sink_(r);
}

namespace {

LmResult run_lm_stage(ParameterSet<float> params, const ModelConfig& model, const TrainConfig& train,
                      LmStageSpec stage, std::vector<int> train_stream, std::vector<int> valid_stream,
                      std::uint64_t seed, MetricsSink sink) {
  LmTrainer trainer(model, train, std::move(stage), std::move(params), std::move(train_stream), valid_stream,
                    seed);
  trainer.set_metrics_sink(std::move(sink));
  trainer.run();
  LmResult r{trainer.params(), model, trainer.last_validation(), trainer.history()};
  if (r.validation.tokens == 0)
    r.validation = evaluate_language_model(r.params, model, valid_stream, train.lm_batch, train.bptt);
  return r;
}

}  // namespace

LmResult pretrain_lm(const ModelConfig& model, const TrainConfig& train, std::vector<int> train_stream,
                     std::vector<int> valid_stream, std::uint64_t seed, MetricsSink sink) {
  return run_lm_stage(build_language_model<float>(model, seed), model, train, pretrain_stage(train),
                      std::move(train_stream), std::move(valid_stream), seed, std::move(sink));
}

LmResult pretrain_lm(const ModelConfig& model, const TrainConfig& train, std::span<const std::string> corpus,
                     const tok::TokenizerModel& tokenizer, std::uint64_t seed, MetricsSink sink) {
  check_vocab_compatible(model, tokenizer);
  if (corpus.empty()) throw DataError("empty corpus");
  const CorpusSplit s = split_corpus(corpus, train.valid_fraction);
  return pretrain_lm(model, train, encode_corpus(s.train, tokenizer), encode_corpus(s.valid, tokenizer), seed,
                     std::move(sink));
}

LmResult finetune_lm(const ParameterSet<float>& params, const ModelConfig& model, const TrainConfig& train,
                     std::vector<int> train_stream, std::vector<int> valid_stream, std::uint64_t seed,
                     MetricsSink sink) {
  return run_lm_stage(params, model, train, finetune_stage(train), std::move(train_stream), std::move(valid_stream),
                      seed, std::move(sink));
}

LmResult finetune_lm(const ParameterSet<float>& params, const ModelConfig& model, const TrainConfig& train,
                     std::span<const std::string> corpus, const tok::TokenizerModel& tokenizer, std::uint64_t seed,
                     MetricsSink sink) {
  check_vocab_compatible(model, tokenizer);
  if (corpus.empty()) throw DataError("empty corpus");
  const CorpusSplit s = split_corpus(corpus, train.valid_fraction);
  return finetune_lm(params, model, train, encode_corpus(s.train, tokenizer), encode_corpus(s.valid, tokenizer),
                     seed, std::move(sink));
}

// ---------------------------------------------------------------------------

namespace {

struct PaddedBatch {
  std::vector<int> ids;  // time-major
  std::vector<Index> lengths;
  std::vector<int> labels;
  Index steps = 0;
  Index batch = 0;
};

PaddedBatch pad_batch(const EncodedDataset& data, std::span<const std::size_t> rows, int pad_id) {
  PaddedBatch b;
  b.batch = static_cast<Index>(rows.size());
  for (std::size_t r : rows) b.steps = std::max<Index>(b.steps, static_cast<Index>(data.examples[r].ids.size()));
  b.ids.assign(static_cast<std::size_t>(b.steps * b.batch), pad_id);
  for (Index j = 0; j < b.batch; ++j) {
    const auto& ex = data.examples[rows[j]];
    for (std::size_t t = 0; t < ex.ids.size(); ++t) b.ids[t * b.batch + j] = ex.ids[t];
    b.lengths.push_back(static_cast<Index>(ex.ids.size()));
    b.labels.push_back(ex.label);
  }
  return b;
}

void check_encoded(const EncodedDataset& data, const char* what) {
  if (data.n_classes < 2) throw DataError(std::string(what) + " set needs at least 2 classes");
  if (data.examples.empty()) throw DataError(std::string(what) + " set is empty");
  for (std::size_t i = 0; i < data.examples.size(); ++i) {
    const auto& e = data.examples[i];
    if (e.label < 0 || e.label >= data.n_classes)
      throw DataError(std::string(what) + " example " + std::to_string(i + 1) + ": class id " +
                      std::to_string(e.label) + " outside [0," + std::to_string(data.n_classes) + ")");
    if (e.ids.empty()) throw DataError(std::string(what) + " example " + std::to_string(i + 1) + " has no tokens");
  }
}

}  // namespace

ClassifierEvaluation evaluate_classifier(const ParameterSet<float>& params, const ModelConfig& cfg,
                                         const EncodedDataset& data, Index batch, int pad_id) {
  check_encoded(data, "evaluation");
  ClassifierEvaluation e;
  const std::size_t n = data.examples.size();
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  double total = 0;
  Index correct = 0;
  for (std::size_t s = 0; s < n; s += static_cast<std::size_t>(batch)) {
    const std::size_t len = std::min<std::size_t>(static_cast<std::size_t>(batch), n - s);
    const PaddedBatch b = pad_batch(data, std::span<const std::size_t>(rows).subspan(s, len), pad_id);
    Tape<float> tape;
    auto out = classifier_forward(tape, params, cfg, TokenBatch{b.ids, b.steps, b.batch},
                                  std::span<const Index>(b.lengths), Mode::eval);
    total += static_cast<double>(cross_entropy(out.logits, std::span<const int>(b.labels)).value().item()) *
             static_cast<double>(len);
    auto logits = out.logits.value().as_rows();
    for (Index j = 0; j < b.batch; ++j) {
      Index arg = 0;
      logits.row(j).maxCoeff(&arg);
      e.predictions.push_back(static_cast<int>(arg));
      correct += (arg == b.labels[j]);
    }
  }
  e.loss = total / static_cast<double>(n);
  e.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return e;
}

ClassifierResult finetune_classifier(const ParameterSet<float>* lm, const ModelConfig& model_in,
                                     const TrainConfig& train, const EncodedDataset& train_set,
                                     const EncodedDataset& valid_set, int pad_id, std::uint64_t seed,
                                     MetricsSink sink, const std::string& stage) {
  train.validate();
  check_encoded(train_set, "training");
  check_encoded(valid_set, "validation");
  if (valid_set.n_classes != train_set.n_classes)
    throw DataError("training and validation sets disagree on the class count");
  if (train_set.examples.size() < 2) throw DataError("training set needs at least 2 examples");
  const auto start = std::chrono::steady_clock::now();

  ModelConfig model = model_in;
  model.dropout.multiplier = train.clf_dropout;
  model.validate();
  const int K = train_set.n_classes;
  if (pad_id < 0 || pad_id >= model.vocab_size) throw ConfigError("padding id outside the vocabulary");

  ClassifierResult res;
  res.model = model_in;
  res.n_classes = K;
  ParameterSet<float> params = build_classifier<float>(model, K, seed);
  if (lm) {
    check_params_match(*lm, model);
    transfer_encoder(*lm, model, params, model);
  }

  const std::size_t n = train_set.examples.size();
  const Index bs = train.clf_batch;
  const Index full = static_cast<Index>(n) / bs;
  const Index rem = static_cast<Index>(n) % bs;
  // A trailing batch of one cannot be batch-normalized; it is skipped.
  const Index steps_per_epoch = full + (rem >= 2 ? 1 : 0);
  if (steps_per_epoch == 0) throw DataError("no training batch with at least 2 examples");

  ScheduleConfig sched = train.schedule;
  sched.total_steps = std::max<Index>(1, train.clf_epochs * steps_per_epoch);
  sched.lr_max = train.clf_lr;
  sched.validate();
  const std::vector<double> mult = entry_multipliers(params, model.n_groups(), train.disc_factor);

  auto emit = [&](MetricRecord r) {
    r.stage = stage;
    r.wallclock_ms = elapsed_ms(start);
    res.history.push_back(r);
    if (sink) sink(r);
  };

  const ClassifierEvaluation initial = evaluate_classifier(params, model, valid_set, bs, pad_id);
  res.params = params;
  res.best_epoch = 0;
  res.best_valid_accuracy = initial.accuracy;
  res.final_valid_accuracy = initial.accuracy;

  Adam<float> adam(train.adam);
  Index step = 0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> lrs(mult.size());
  ScheduleValue sv;
  for (int epoch = 1; epoch <= train.clf_epochs; ++epoch) {
    auto shuffle_rng = step_rng(seed, name_stream(stage + "/shuffle"), static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0;
    Index seen = 0, correct = 0;
    for (Index k = 0; k < steps_per_epoch; ++k) {
      const std::size_t s = static_cast<std::size_t>(k * bs);
      const std::size_t len = std::min<std::size_t>(static_cast<std::size_t>(bs), n - s);
      const PaddedBatch b = pad_batch(train_set, std::span<const std::size_t>(order).subspan(s, len), pad_id);
      sv = one_cycle_cosine(step, sched);
      auto rng = step_rng(seed, name_stream(stage), static_cast<std::uint64_t>(step));
      Tape<float> tape;
      auto out = classifier_forward(tape, params, model, TokenBatch{b.ids, b.steps, b.batch},
                                    std::span<const Index>(b.lengths), Mode::train, &rng);
      Var<float> loss = label_smoothed_loss(out.logits, std::span<const int>(b.labels), train.label_smooth_eps);
      loss_sum += static_cast<double>(loss.value().item()) * static_cast<double>(len);
      seen += static_cast<Index>(len);
      auto logits = out.logits.value().as_rows();
      for (Index j = 0; j < b.batch; ++j) {
        Index arg = 0;
        logits.row(j).maxCoeff(&arg);
        correct += (arg == b.labels[j]);
      }
      auto grads = tape.backward(loss);
      grads.clip_global_norm(static_cast<float>(train.clip_norm));
      for (std::size_t i = 0; i < lrs.size(); ++i) lrs[i] = mult[i] * sv.lr;
      adam.step(params, grads, lrs, sv.momentum, train.weight_decay);
      update_batch_norm_statistics(params, model, out, b.batch);
      ++step;
    }
    const ClassifierEvaluation v = evaluate_classifier(params, model, valid_set, bs, pad_id);
    emit({stage, epoch, step, "train", loss_sum / static_cast<double>(seen), std::nullopt,
          static_cast<double>(correct) / static_cast<double>(seen), sv.lr, sv.momentum, 0});
    emit({stage, epoch, step, "valid", v.loss, std::nullopt, v.accuracy, sv.lr, sv.momentum, 0});
    res.final_valid_accuracy = v.accuracy;
    if (v.accuracy > res.best_valid_accuracy) {
      res.best_valid_accuracy = v.accuracy;
      res.best_epoch = epoch;
      res.params = params;
    }
  }
  return res;
}

}  // namespace multifit
