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
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "multifit/training.hpp"

namespace multifit {

struct PseudoLabel {
  std::string id;
  int label = 0;
  double confidence = 1.0;
};

struct PseudoLabelSet {
  std::vector<PseudoLabel> records;
  std::string source;

  std::size_t size() const { return records.size(); }
  const PseudoLabel* find(const std::string& id) const;
};

// Teacher TSV: `<id>\t<class_id>[\t<confidence>]`, `#` comments and blank
// lines skipped. Errors name the offending line.
PseudoLabelSet parse_teacher_predictions(std::istream& in, int n_classes, const std::string& source);
PseudoLabelSet ingest_teacher_predictions(const std::string& path, int n_classes);

struct IdentifiedText {
  std::string id;
  std::string text;
  int label = -1;  // gold label when known
};

struct BootstrapOptions {
  double valid_fraction = 0.1;  // of the pseudo-labeled texts, for model selection
  double min_confidence = 0.0;  // records below are dropped; 0 keeps everything
};

struct BootstrapResult {
  ClassifierResult classifier;
  double student_accuracy = 0;
  double teacher_accuracy = 0;  // recomputed against the gold labels
  Index gold_examples = 0;
  Index teacher_covered = 0;  // gold examples the teacher labeled
  Index pseudo_train = 0;
  Index pseudo_valid = 0;
};

// Pseudo-labeled dataset in record order: texts resolved by id, gold ids
// excluded. DataError when ids do not resolve (first 10 listed) or nothing remains.
LabeledDataset pseudo_labeled_dataset(const std::vector<IdentifiedText>& texts, const PseudoLabelSet& pseudo,
                                      const std::vector<std::string>& class_names,
                                      const std::vector<IdentifiedText>& gold, double min_confidence = 0.0);

// Splits off the final `valid_fraction` (at least one example) for selection.
std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& data, double valid_fraction);

// Classifier fine-tuning on pseudo labels, evaluated against gold.
BootstrapResult bootstrap_train(const ParameterSet<float>& lm, const ModelConfig& model, const TrainConfig& train,
                                const tok::TokenizerModel& tokenizer, const std::vector<IdentifiedText>& texts,
                                const PseudoLabelSet& pseudo, const std::vector<std::string>& class_names,
                                const std::vector<IdentifiedText>& gold, std::uint64_t seed,
                                const BootstrapOptions& options = {}, MetricsSink sink = {});

struct NoiseSpec {
  double p = 0.0;
  std::uint64_t seed = 0;
};

// Each label independently, with probability p, becomes a uniformly drawn different class.
LabeledDataset perturb_labels(const LabeledDataset& data, const NoiseSpec& spec);

struct NoiseRow {
  double p = 0;
  double acc_pretrained = 0;  // NaN without a language model
  double acc_random = 0;
  double baseline = 0;  // 1 - p
};

struct NoiseRunData {
  LabeledDataset train;
  LabeledDataset valid;
  LabeledDataset test;
};

// For each p, trains a classifier from `lm` (when given) and one from a random
// encoder on labels perturbed with probability p (train and validation), scores
// both on the clean test set, and averages over `seeds`.
std::vector<NoiseRow> noise_robustness_run(const ParameterSet<float>* lm, const ModelConfig& model,
                                           const TrainConfig& train, const tok::TokenizerModel& tokenizer,
                                           const NoiseRunData& data, const std::vector<double>& grid,
                                           const std::vector<std::uint64_t>& seeds, MetricsSink sink = {});

// Header plus one `p\tacc_pretrained\tacc_random\tbaseline` line per row.
std::string format_noise_table(const std::vector<NoiseRow>& rows);

}  // namespace multifit
