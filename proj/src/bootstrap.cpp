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
#include "multifit/bootstrap.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "multifit/errors.hpp"

namespace multifit {

const PseudoLabel* PseudoLabelSet::find(const std::string& id) const {
  for (const auto& r : records)
    if (r.id == id) return &r;
  return nullptr;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) return out;
    start = tab + 1;
  }
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
  std::istringstream is(s);
  is >> out;
  return !is.fail() && is.eof();
}

}  // namespace

PseudoLabelSet parse_teacher_predictions(std::istream& in, int n_classes, const std::string& source) {
  if (n_classes < 2) throw ConfigError("teacher predictions need at least 2 classes");
  PseudoLabelSet set;
  set.source = source;
  std::unordered_map<std::string, std::size_t> seen;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& what) {
    throw IngestionError(source + ":" + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split_tabs(line);
    if (fields.size() < 2 || fields.size() > 3) fail("expected <id>\\t<class_id>[\\t<confidence>]");
    PseudoLabel r;
    r.id = fields[0];
    if (r.id.empty()) fail("empty example id");
    if (!parse_number(fields[1], r.label) || r.label < 0 || r.label >= n_classes)
      fail("unknown class '" + fields[1] + "' (expected 0.." + std::to_string(n_classes - 1) + ")");
    if (fields.size() == 3 && (!parse_number(fields[2], r.confidence) || !(r.confidence >= 0 && r.confidence <= 1)))
      fail("confidence '" + fields[2] + "' is not a number in [0,1]");
    if (auto it = seen.find(r.id); it != seen.end())
      fail("duplicate id '" + r.id + "' (first seen on line " + std::to_string(it->second) + ")");
    seen.emplace(r.id, lineno);
    set.records.push_back(std::move(r));
  }
  return set;
}

PseudoLabelSet ingest_teacher_predictions(const std::string& path, int n_classes) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open teacher predictions '" + path + "'");
  return parse_teacher_predictions(in, n_classes, path);
}

LabeledDataset pseudo_labeled_dataset(const std::vector<IdentifiedText>& texts, const PseudoLabelSet& pseudo,
                                      const std::vector<std::string>& class_names,
                                      const std::vector<IdentifiedText>& gold, double min_confidence) {
  if (pseudo.records.empty()) throw DataError("pseudo-label set is empty; nothing to train on");
  std::unordered_map<std::string, const std::string*> by_id;
  for (const auto& t : texts) by_id.emplace(t.id, &t.text);
  std::unordered_set<std::string> gold_ids;
  for (const auto& g : gold) gold_ids.insert(g.id);

  LabeledDataset d;
  d.class_names = class_names;
  d.split = "pseudo";
  std::vector<std::string> missing;
  Index unresolved = 0;
  for (const auto& r : pseudo.records) {
    if (gold_ids.count(r.id)) continue;
    auto it = by_id.find(r.id);
    if (it == by_id.end()) {
      ++unresolved;
      if (missing.size() < 10) missing.push_back(r.id);
      continue;
    }
    if (r.label >= static_cast<int>(class_names.size()))
      throw DataError("pseudo label " + std::to_string(r.label) + " for '" + r.id + "' outside the class set");
    if (r.confidence < min_confidence) continue;
    d.examples.push_back({*it->second, r.label});
  }
  if (unresolved > 0) {
    std::string list;
    for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
    throw DataError(std::to_string(unresolved) + " pseudo-label ids have no text: " + list +
                    (unresolved > 10 ? ", ..." : ""));
  }
  if (d.examples.empty()) throw DataError("no pseudo-labeled training examples remain");
  d.validate();
  return d;
}

std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& data, double valid_fraction) {
  if (!(valid_fraction > 0 && valid_fraction < 1)) throw ConfigError("valid_fraction must lie in (0,1)");
  const std::size_t n = data.examples.size();
  if (n < 3) throw DataError("dataset '" + data.split + "' is too small to split");
  const std::size_t n_valid =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(valid_fraction * n)), 1, n - 2);
  LabeledDataset train = data, valid = data;
  train.split = data.split + "/train";
  valid.split = data.split + "/valid";
  train.examples.assign(data.examples.begin(), data.examples.end() - static_cast<std::ptrdiff_t>(n_valid));
  valid.examples.assign(data.examples.end() - static_cast<std::ptrdiff_t>(n_valid), data.examples.end());
  return {std::move(train), std::move(valid)};
}

BootstrapResult bootstrap_train(const ParameterSet<float>& lm, const ModelConfig& model, const TrainConfig& train,
                                const tok::TokenizerModel& tokenizer, const std::vector<IdentifiedText>& texts,
                                const PseudoLabelSet& pseudo, const std::vector<std::string>& class_names,
                                const std::vector<IdentifiedText>& gold, std::uint64_t seed,
                                const BootstrapOptions& options, MetricsSink sink) {
  check_vocab_compatible(model, tokenizer);
  if (gold.empty()) throw DataError("gold evaluation set is empty");
  const LabeledDataset all = pseudo_labeled_dataset(texts, pseudo, class_names, gold, options.min_confidence);
  const auto [tr, va] = split_dataset(all, options.valid_fraction);

  LabeledDataset gold_set;
  gold_set.class_names = class_names;
  gold_set.split = "gold";
  std::unordered_map<std::string, int> teacher;
  for (const auto& r : pseudo.records) teacher.emplace(r.id, r.label);
  BootstrapResult res;
  for (const auto& g : gold) {
    gold_set.examples.push_back({g.text, g.label});
    if (auto it = teacher.find(g.id); it != teacher.end()) {
      ++res.teacher_covered;
      res.teacher_accuracy += (it->second == g.label);
    }
  }
  res.gold_examples = static_cast<Index>(gold.size());
  res.teacher_accuracy = res.teacher_covered > 0 ? res.teacher_accuracy / static_cast<double>(res.teacher_covered)
                                                 : std::numeric_limits<double>::quiet_NaN();
  res.pseudo_train = static_cast<Index>(tr.examples.size());
  res.pseudo_valid = static_cast<Index>(va.examples.size());

  const EncodedDataset etr = encode_dataset(tr, tokenizer, train.max_tokens);
  const EncodedDataset eva = encode_dataset(va, tokenizer, train.max_tokens);
  const EncodedDataset egold = encode_dataset(gold_set, tokenizer, train.max_tokens);
  res.classifier = finetune_classifier(&lm, model, train, etr, eva, tokenizer.pad_id(), seed, std::move(sink),
                                       "bootstrap");
  res.student_accuracy =
      evaluate_classifier(res.classifier.params, model, egold, train.clf_batch, tokenizer.pad_id()).accuracy;
  return res;
}

LabeledDataset perturb_labels(const LabeledDataset& data, const NoiseSpec& spec) {
  if (!(spec.p >= 0 && spec.p <= 1)) throw ConfigError("noise probability " + std::to_string(spec.p) + " outside [0,1]");
  const int K = data.n_classes();
  if (K < 2) throw ConfigError("label noise needs at least 2 classes");
  std::mt19937_64 g(spec.seed);
  std::bernoulli_distribution flip(spec.p);
  std::uniform_int_distribution<int> other(0, K - 2);
  LabeledDataset out = data;
  for (auto& e : out.examples) {
    if (!flip(g)) continue;
    const int r = other(g);
    e.label = r >= e.label ? r + 1 : r;
  }
  return out;
}

std::vector<NoiseRow> noise_robustness_run(const ParameterSet<float>* lm, const ModelConfig& model,
                                           const TrainConfig& train, const tok::TokenizerModel& tokenizer,
                                           const NoiseRunData& data, const std::vector<double>& grid,
                                           const std::vector<std::uint64_t>& seeds, MetricsSink sink) {
  check_vocab_compatible(model, tokenizer);
  if (seeds.empty()) throw ConfigError("noise run needs at least one seed");
  for (double p : grid)
    if (!(p >= 0 && p <= 0.75)) throw ConfigError("noise grid value " + std::to_string(p) + " outside [0, 0.75]");
  const EncodedDataset test = encode_dataset(data.test, tokenizer, train.max_tokens);
  const int pad = tokenizer.pad_id();

  std::vector<NoiseRow> rows;
  for (double p : grid) {
    NoiseRow row;
    row.p = p;
    row.baseline = 1.0 - p;
    double pre = 0, rnd = 0;
    for (std::uint64_t seed : seeds) {
      const EncodedDataset tr = encode_dataset(perturb_labels(data.train, {p, seed}), tokenizer, train.max_tokens);
      const EncodedDataset va =
          encode_dataset(perturb_labels(data.valid, {p, seed ^ 0x9e3779b97f4a7c15ULL}), tokenizer, train.max_tokens);
      char tag[32];
      std::snprintf(tag, sizeof tag, "p=%.2f", p);
      if (lm) {
        const auto r = finetune_classifier(lm, model, train, tr, va, pad, seed, sink,
                                           std::string("noise-pretrained/") + tag);
        pre += evaluate_classifier(r.params, model, test, train.clf_batch, pad).accuracy;
      }
      const auto r = finetune_classifier(nullptr, model, train, tr, va, pad, seed, sink,
                                         std::string("noise-random/") + tag);
      rnd += evaluate_classifier(r.params, model, test, train.clf_batch, pad).accuracy;
    }
    const double n = static_cast<double>(seeds.size());
    row.acc_pretrained = lm ? pre / n : std::numeric_limits<double>::quiet_NaN();
    row.acc_random = rnd / n;
    rows.push_back(row);
  }
  return rows;
}

std::string format_noise_table(const std::vector<NoiseRow>& rows) {
  std::string out = "p\tacc_pretrained\tacc_random\tbaseline\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.2f\t%.4f\t%.4f\t%.4f\n", r.p, r.acc_pretrained, r.acc_random, r.baseline);
    out += buf;
  }
  return out;
}

}  // namespace multifit
