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

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "multifit/network.hpp"
#include "multifit/optimizer.hpp"
#include "multifit/tokenizer.hpp"

namespace multifit {

// ---------------------------------------------------------------------------
// Schedule and learning rates

struct ScheduleConfig {
  Index total_steps = 1;
  double lr_max = 1e-3;
  double pct_warmup = 0.1;
  double div_start = 25.0;
  double div_final = 1e4;
  double mom_max = 0.95;
  double mom_min = 0.85;

  void validate() const;
};

struct ScheduleValue {
  double lr = 0;
  double momentum = 0;
};

// b + (a - b) * (1 + cos(pi u)) / 2: a at u = 0, b at u = 1.
double cosine_interpolate(double a, double b, double u);

// Cosine warmup to lr_max over the first pct_warmup of the steps, cosine
// anneal to lr_max / div_final after; momentum runs in anti-phase.
ScheduleValue one_cycle_cosine(Index step, const ScheduleConfig& cfg);

// Group g of n gets base_lr / factor^(n-1-g); the last group (head) gets base_lr.
std::vector<double> discriminative_lr_groups(double base_lr, int n_groups, double factor);

// Cross entropy against (1-eps) onehot + eps/K, averaged over the batch.
template <typename Scalar>
Var<Scalar> label_smoothed_loss(Var<Scalar> logits, std::span<const int> targets, double eps);

// ---------------------------------------------------------------------------
// BPTT batching

struct BpttWindow {
  Index steps = 0;
  std::vector<int> input;   // time-major [steps x batch]
  std::vector<int> target;  // input shifted by one position
};

struct BpttBatches {
  Index batch = 0;
  Index strip_length = 0;
  Index dropped_tokens = 0;  // trailing remainder that did not fill a strip
  std::vector<BpttWindow> windows;

  Index token_count() const;  // predicted positions over all windows
};

// Splits the stream into `batch` contiguous strips and walks them in
// non-overlapping windows of `bptt`; the last window may be shorter.
BpttBatches bptt_batchify(std::span<const int> stream, Index batch, Index bptt);

// ---------------------------------------------------------------------------
// Data

struct Example {
  std::string text;
  int label = 0;
};

struct LabeledDataset {
  std::vector<Example> examples;
  std::vector<std::string> class_names;
  std::string split;

  int n_classes() const { return static_cast<int>(class_names.size()); }
  // Dense labels in [0, K), K >= 2, non-empty texts; DataError otherwise.
  void validate() const;
};

struct EncodedExample {
  std::vector<int> ids;
  int label = 0;
};

struct EncodedDataset {
  std::vector<EncodedExample> examples;
  int n_classes = 0;
};

// Tokenizes every text; longer sequences keep their first `max_tokens` ids (0 = no limit).
EncodedDataset encode_dataset(const LabeledDataset& data, const tok::TokenizerModel& tokenizer,
                              Index max_tokens = 0);

// One id stream with EOS after every line.
std::vector<int> encode_corpus(std::span<const std::string> lines, const tok::TokenizerModel& tokenizer);

struct CorpusSplit {
  std::vector<std::string> train;
  std::vector<std::string> valid;
};

// The final `valid_fraction` of lines (at least one) becomes validation.
CorpusSplit split_corpus(std::span<const std::string> lines, double valid_fraction = 0.05);

// TransferError when the tokenizer cannot feed a model of this vocabulary.
void check_vocab_compatible(const ModelConfig& model, const tok::TokenizerModel& tokenizer);

// ---------------------------------------------------------------------------
// Configuration and metrics

struct TrainConfig {
  Index bptt = 70;
  Index lm_batch = 50;
  Index clf_batch = 18;
  int pretrain_epochs = 10;
  int finetune_epochs = 20;
  int clf_epochs = 8;
  double pretrain_lr = 5e-3;
  double finetune_lr = 2e-3;
  double clf_lr = 5e-3;
  double weight_decay = 0.01;
  double label_smooth_eps = 0.1;
  double disc_factor = 2.6;
  double pretrain_dropout = 0.0;
  double finetune_dropout = 0.3;
  double clf_dropout = 0.5;
  double clip_norm = 0.25;
  double valid_fraction = 0.05;
  Index max_tokens = 0;
  ScheduleConfig schedule;  // total_steps and lr_max are filled in per stage
  AdamConfig adam;

  void validate() const;
};

struct MetricRecord {
  std::string stage;
  int epoch = 0;
  Index step = 0;
  std::string split;
  double loss = 0;
  std::optional<double> perplexity;
  std::optional<double> accuracy;
  double lr = 0;
  double momentum = 0;
  double wallclock_ms = 0;
};

using MetricsSink = std::function<void(const MetricRecord&)>;

// Step-indexed generator so dropout masks do not depend on how a run was split.
std::mt19937_64 step_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t step);

// ---------------------------------------------------------------------------
// Language model stages

struct LmStageSpec {
  std::string name = "lm-pretrain";
  int epochs = 10;
  double lr_max = 5e-3;
  double dropout = 0.0;
  double disc_factor = 1.0;
};

LmStageSpec pretrain_stage(const TrainConfig& cfg);
LmStageSpec finetune_stage(const TrainConfig& cfg);

struct LmEvaluation {
  double loss = 0;  // mean token cross entropy
  double perplexity = 0;
  Index tokens = 0;
};

LmEvaluation evaluate_language_model(const ParameterSet<float>& params, const ModelConfig& cfg,
                                     std::span<const int> stream, Index batch, Index bptt);

// Epoch-resumable LM training. The schedule spans all epochs of the stage;
// recurrent state is reset at each epoch and carried (detached) between windows.
class LmTrainer {
 public:
  LmTrainer(ModelConfig model, TrainConfig train, LmStageSpec stage, ParameterSet<float> params,
            std::vector<int> train_stream, std::vector<int> valid_stream, std::uint64_t seed);

  // One optimizer step on the next window; returns its training loss.
  double train_step();
  // Finishes the current epoch, evaluates validation, emits metrics.
  void run_epoch();
  void run();

  bool done() const { return epoch_ >= stage_.epochs; }
  int epoch() const { return epoch_; }
  Index step() const { return step_; }
  Index steps_per_epoch() const { return static_cast<Index>(batches_.windows.size()); }
  Index total_steps() const { return schedule_.total_steps; }
  const BpttBatches& batches() const { return batches_; }

  const ModelConfig& model_config() const { return model_; }
  const LmStageSpec& stage() const { return stage_; }
  ParameterSet<float>& params() { return params_; }
  const ParameterSet<float>& params() const { return params_; }
  Adam<float>& optimizer() { return adam_; }
  const Adam<float>& optimizer() const { return adam_; }

  // Continue from a checkpoint written at an epoch boundary.
  void resume(int epoch, Adam<float>::State optimizer_state);

  void set_metrics_sink(MetricsSink sink) { sink_ = std::move(sink); }
  void set_epoch_callback(std::function<void(const LmTrainer&)> cb) { on_epoch_ = std::move(cb); }

  const std::vector<MetricRecord>& history() const { return history_; }
  LmEvaluation last_validation() const { return last_valid_; }

 private:
  void emit(MetricRecord r);

  ModelConfig model_;
  TrainConfig train_;
  LmStageSpec stage_;
  ParameterSet<float> params_;
  std::vector<int> valid_;
  BpttBatches batches_;
  std::uint64_t seed_;
  ScheduleConfig schedule_;
  std::vector<double> lrs_;
  Adam<float> adam_;
  RecurrentState<float> state_;
  int epoch_ = 0;
  Index step_ = 0;
  double epoch_loss_ = 0;
  Index epoch_tokens_ = 0;
  ScheduleValue last_sched_;
  LmEvaluation last_valid_;
  std::vector<MetricRecord> history_;
  MetricsSink sink_;
  std::function<void(const LmTrainer&)> on_epoch_;
  std::chrono::steady_clock::time_point start_;
};

struct LmResult {
  ParameterSet<float> params;
  ModelConfig model;
  LmEvaluation validation;
  std::vector<MetricRecord> history;
};

// Fresh model from `seed`, trained without dropout.
LmResult pretrain_lm(const ModelConfig& model, const TrainConfig& train, std::vector<int> train_stream,
                     std::vector<int> valid_stream, std::uint64_t seed, MetricsSink sink = {});
LmResult pretrain_lm(const ModelConfig& model, const TrainConfig& train, std::span<const std::string> corpus,
                     const tok::TokenizerModel& tokenizer, std::uint64_t seed, MetricsSink sink = {});

// Continues from `params` with dropout and discriminative rates.
LmResult finetune_lm(const ParameterSet<float>& params, const ModelConfig& model, const TrainConfig& train,
                     std::vector<int> train_stream, std::vector<int> valid_stream, std::uint64_t seed,
                     MetricsSink sink = {});
LmResult finetune_lm(const ParameterSet<float>& params, const ModelConfig& model, const TrainConfig& train,
                     std::span<const std::string> corpus, const tok::TokenizerModel& tokenizer,
                     std::uint64_t seed, MetricsSink sink = {});

// ---------------------------------------------------------------------------
// Classifier stage

struct ClassifierEvaluation {
  double loss = 0;
  double accuracy = 0;
  std::vector<int> predictions;
};

ClassifierEvaluation evaluate_classifier(const ParameterSet<float>& params, const ModelConfig& cfg,
                                         const EncodedDataset& data, Index batch, int pad_id);

struct ClassifierResult {
  ParameterSet<float> params;  // best validation accuracy
  ModelConfig model;
  int n_classes = 0;
  int best_epoch = 0;  // 0 = the transferred model before training
  double best_valid_accuracy = 0;
  double final_valid_accuracy = 0;
  std::vector<MetricRecord> history;
};

// Builds a classifier, copies the LM encoder when `lm` is given (random
// encoder otherwise), and fine-tunes all groups with label smoothing.
ClassifierResult finetune_classifier(const ParameterSet<float>* lm, const ModelConfig& model,
                                     const TrainConfig& train, const EncodedDataset& train_set,
                                     const EncodedDataset& valid_set, int pad_id, std::uint64_t seed,
                                     MetricsSink sink = {}, const std::string& stage = "clf-train");

}  // namespace multifit
