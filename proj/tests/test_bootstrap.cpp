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
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "multifit/bootstrap.hpp"
#include "multifit/errors.hpp"
#include "support/synthetic.hpp"

using namespace multifit;

namespace {

PseudoLabelSet parse(const std::string& text, int k = 3) {
  std::istringstream in(text);
  return parse_teacher_predictions(in, k, "teacher.tsv");
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const IngestionError& e) {
    return e.what();
  }
  return "";
}

LabeledDataset uniform_dataset(std::size_t n, int k) {
  LabeledDataset d;
  for (int c = 0; c < k; ++c) d.class_names.push_back("c" + std::to_string(c));
  for (std::size_t i = 0; i < n; ++i) d.examples.push_back({"doc " + std::to_string(i), static_cast<int>(i % k)});
  return d;
}

struct Fixture {
  testing::KeywordTask task = testing::KeywordTask::make(4, 6, 20, 8);
  tok::TokenizerModel tokenizer = tok::train_word_model(task.corpus(300, 1), 1000);
  ModelConfig model;
  TrainConfig train;
  ParameterSet<float> lm;

  Fixture() {
    model.vocab_size = tokenizer.size();
    model.emb_dim = 16;
    model.hidden_dim = 24;
    model.n_layers = 2;
    train.clf_epochs = 3;
    train.clf_lr = 1e-2;
    lm = build_language_model<float>(model, 4);
  }
};

}  // namespace

TEST_CASE("teacher prediction ingestion") {
  const auto set = parse("a\t0\nb\t1\t0.25\n# comment\n\nc\t2\n");
  REQUIRE(set.size() == 3);
  CHECK(set.records[0].id == "a");
  CHECK(set.records[0].confidence == 1.0);
  CHECK(set.records[1].confidence == 0.25);
  CHECK(set.records[2].label == 2);
  CHECK(set.find("b")->label == 1);
  CHECK(set.find("z") == nullptr);
  CHECK(set.source == "teacher.tsv");

  const std::string dup = error_of("a\t0\nb\t1\na\t2\n");
  CHECK(dup.find("teacher.tsv:3") != std::string::npos);
  CHECK(dup.find("'a'") != std::string::npos);
  CHECK(error_of("a\t3\n").find(":1: unknown class") != std::string::npos);
  CHECK(error_of("a\tx\n").find("unknown class") != std::string::npos);
  CHECK(error_of("a\n").find(":1:") != std::string::npos);
  CHECK(error_of("a\t1\t1.5\n").find("confidence") != std::string::npos);
  CHECK(error_of("a\t1\t0.5\textra\n").find(":1:") != std::string::npos);
  CHECK_THROWS_AS(ingest_teacher_predictions("/nonexistent/teacher.tsv", 3), IngestionError);
}

TEST_CASE("label perturbation") {
  const LabeledDataset d = uniform_dataset(10000, 4);
  SUBCASE("p = 0 is the identity") {
    const auto out = perturb_labels(d, {0.0, 1});
    for (std::size_t i = 0; i < d.examples.size(); ++i) CHECK(out.examples[i].label == d.examples[i].label);
  }
  SUBCASE("p = 1 changes every label") {
    const auto out = perturb_labels(d, {1.0, 2});
    std::size_t same = 0;
    for (std::size_t i = 0; i < d.examples.size(); ++i) same += out.examples[i].label == d.examples[i].label;
    CHECK(same == 0);
  }
  SUBCASE("p = 0.5 changes about half, uniformly over the other classes") {
    const auto out = perturb_labels(d, {0.5, 3});
    std::size_t changed = 0;
    std::vector<std::size_t> to(4, 0);
    for (std::size_t i = 0; i < d.examples.size(); ++i) {
      if (out.examples[i].label == d.examples[i].label) continue;
      ++changed;
      if (d.examples[i].label == 0) ++to[out.examples[i].label];
    }
    const double frac = static_cast<double>(changed) / 10000.0;
    CHECK(frac >= 0.48);
    CHECK(frac <= 0.52);
    CHECK(to[0] == 0);
    for (int c = 1; c < 4; ++c) CHECK(std::abs(static_cast<double>(to[c]) / (changed / 4.0) - 1.0 / 3) < 0.05);
  }
  SUBCASE("deterministic given the seed") {
    const auto a = perturb_labels(d, {0.3, 9}), b = perturb_labels(d, {0.3, 9}), c = perturb_labels(d, {0.3, 10});
    bool same_ab = true, same_ac = true;
    for (std::size_t i = 0; i < d.examples.size(); ++i) {
      same_ab = same_ab && a.examples[i].label == b.examples[i].label;
      same_ac = same_ac && a.examples[i].label == c.examples[i].label;
    }
    CHECK(same_ab);
    CHECK_FALSE(same_ac);
  }
  CHECK_THROWS_AS(perturb_labels(d, {1.5, 1}), ConfigError);
  CHECK_THROWS_AS(perturb_labels(d, {-0.1, 1}), ConfigError);
}

TEST_CASE("pseudo-labeled dataset assembly") {
  std::vector<IdentifiedText> texts;
  for (int i = 0; i < 20; ++i) texts.push_back({"t" + std::to_string(i), "text " + std::to_string(i), -1});
  const std::vector<std::string> classes{"x", "y"};
  PseudoLabelSet pseudo;
  for (int i = 0; i < 20; ++i) pseudo.records.push_back({"t" + std::to_string(i), i % 2, 1.0});
  pseudo.records[5].confidence = 0.2;
  const std::vector<IdentifiedText> gold{{"t3", "text 3", 1}};

  const auto d = pseudo_labeled_dataset(texts, pseudo, classes, gold);
  CHECK(d.examples.size() == 19);
  CHECK(d.examples[3].text == "text 4");
  CHECK(pseudo_labeled_dataset(texts, pseudo, classes, gold, 0.5).examples.size() == 18);

  PseudoLabelSet missing = pseudo;
  for (int i = 0; i < 12; ++i) missing.records.push_back({"m" + std::to_string(i), 0, 1.0});
  try {
    pseudo_labeled_dataset(texts, missing, classes, gold);
    FAIL("expected a data error");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("12 pseudo-label ids") != std::string::npos);
    CHECK(msg.find("m9") != std::string::npos);
    CHECK(msg.find("m10") == std::string::npos);
  }
  CHECK_THROWS_AS(pseudo_labeled_dataset(texts, PseudoLabelSet{}, classes, gold), DataError);

  const auto [tr, va] = split_dataset(d, 0.1);
  CHECK(tr.examples.size() == 17);
  CHECK(va.examples.size() == 2);
  CHECK(va.examples.back().text == "text 19");
}

TEST_CASE("bootstrapping with perfect pseudo labels is supervised fine-tuning") {
  Fixture f;
  const auto data = f.task.dataset(240, 3, "all");
  const auto gold_data = f.task.dataset(60, 4, "gold");
  std::vector<IdentifiedText> texts, gold;
  PseudoLabelSet pseudo;
  for (std::size_t i = 0; i < data.examples.size(); ++i) {
    const std::string id = "u" + std::to_string(i);
    texts.push_back({id, data.examples[i].text, -1});
    pseudo.records.push_back({id, data.examples[i].label, 1.0});
  }
  // The teacher also labels the gold set: 45 of 60 right.
  for (std::size_t i = 0; i < gold_data.examples.size(); ++i) {
    const std::string id = "g" + std::to_string(i);
    const int y = gold_data.examples[i].label;
    gold.push_back({id, gold_data.examples[i].text, y});
    pseudo.records.push_back({id, i % 4 == 0 ? (y + 1) % 4 : y, 0.9});
  }

  const auto boot = bootstrap_train(f.lm, f.model, f.train, f.tokenizer, texts, pseudo, data.class_names, gold, 17);
  CHECK(boot.teacher_covered == 60);
  CHECK(boot.teacher_accuracy == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(boot.pseudo_train + boot.pseudo_valid == 240);

  const auto [tr, va] = split_dataset(data, 0.1);
  const auto sup = finetune_classifier(&f.lm, f.model, f.train, encode_dataset(tr, f.tokenizer),
                                       encode_dataset(va, f.tokenizer), f.tokenizer.pad_id(), 17, {}, "bootstrap");
  bool identical = true;
  for (const auto& e : sup.params) identical = identical && e.value.vec() == boot.classifier.params[e.name].vec();
  CHECK(identical);
  CHECK(boot.classifier.best_epoch == sup.best_epoch);
  CHECK(boot.student_accuracy ==
        evaluate_classifier(sup.params, f.model, encode_dataset(gold_data, f.tokenizer), f.train.clf_batch,
                            f.tokenizer.pad_id())
            .accuracy);
}

TEST_CASE("noise robustness run") {
  Fixture f;
  f.train.clf_epochs = 1;
  NoiseRunData data{f.task.dataset(60, 1, "train"), f.task.dataset(20, 2, "valid"), f.task.dataset(40, 3, "test")};
  const std::vector<double> grid{0, 0.25, 0.5, 0.75};
  const auto rows = noise_robustness_run(&f.lm, f.model, f.train, f.tokenizer, data, grid, {1, 2});
  REQUIRE(rows.size() == 4);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].p == grid[i]);
    CHECK(rows[i].baseline == 1 - grid[i]);
    CHECK(rows[i].acc_pretrained >= 0);
    CHECK(rows[i].acc_random <= 1);
  }
  const std::string table = format_noise_table(rows);
  CHECK(table.rfind("p\tacc_pretrained\tacc_random\tbaseline\n", 0) == 0);
  CHECK(std::count(table.begin(), table.end(), '\n') == 5);
  CHECK(table.find("0.75\t") != std::string::npos);

  const auto no_lm = noise_robustness_run(nullptr, f.model, f.train, f.tokenizer, data, {0.25}, {1});
  CHECK(std::isnan(no_lm[0].acc_pretrained));
  const auto again = noise_robustness_run(nullptr, f.model, f.train, f.tokenizer, data, {0.25}, {1});
  CHECK(again[0].acc_random == no_lm[0].acc_random);
  CHECK_THROWS_AS(noise_robustness_run(nullptr, f.model, f.train, f.tokenizer, data, {0.8}, {1}), ConfigError);
}
