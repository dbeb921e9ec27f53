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
#include "multifit/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "multifit/checkpoint.hpp"
#include "multifit/config.hpp"
#include "multifit/gradcheck.hpp"
#include "multifit/metrics.hpp"
#include "multifit/speed.hpp"

namespace multifit {

// ---------------------------------------------------------------------------
// File readers

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line, std::size_t max_fields) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (out.size() + 1 < max_fields) {
    const std::size_t tab = line.find('\t', pos);
    if (tab == std::string::npos) break;
    out.push_back(line.substr(pos, tab - pos));
    pos = tab + 1;
  }
  out.push_back(line.substr(pos));
  return out;
}

bool skippable(const std::string& line) { return line.empty() || line[0] == '#'; }

std::string where(const std::string& path, std::size_t line) { return path + ":" + std::to_string(line) + ": "; }

int resolve_class(const std::map<std::string, int>& index, const std::string& name, const std::string& path,
                  std::size_t line) {
  const auto it = index.find(name);
  if (it == index.end()) throw DataError(where(path, line) + "unknown class '" + name + "'");
  return it->second;
}

std::map<std::string, int> class_index(const std::vector<std::string>& names) {
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < names.size(); ++i) index.emplace(names[i], static_cast<int>(i));
  return index;
}

// Distinct values of field `field` over all non-comment lines, sorted.
std::vector<std::string> distinct_field(const std::vector<std::string>& lines, std::size_t field,
                                        std::size_t n_fields) {
  std::set<std::string> names;
  for (const auto& line : lines) {
    if (skippable(line)) continue;
    const auto f = split_tabs(line, n_fields);
    if (f.size() == n_fields) names.insert(f[field]);
  }
  return {names.begin(), names.end()};
}

}  // namespace

LabeledDataset read_labeled_tsv(const std::string& path, std::vector<std::string> class_names) {
  const auto lines = read_lines(path);
  LabeledDataset data;
  data.split = path;
  data.class_names = class_names.empty() ? distinct_field(lines, 0, 2) : std::move(class_names);
  const auto index = class_index(data.class_names);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (skippable(lines[i])) continue;
    const auto f = split_tabs(lines[i], 2);
    if (f.size() != 2) throw DataError(where(path, i + 1) + "expected <class>\\t<text>");
    if (f[1].empty()) throw DataError(where(path, i + 1) + "empty text");
    data.examples.push_back({f[1], resolve_class(index, f[0], path, i + 1)});
  }
  if (data.examples.empty()) throw DataError(path + ": no examples");
  return data;
}

std::vector<IdentifiedText> read_texts_tsv(const std::string& path) {
  const auto lines = read_lines(path);
  std::vector<IdentifiedText> out;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (skippable(lines[i])) continue;
    const auto f = split_tabs(lines[i], 2);
    if (f.size() != 2) throw DataError(where(path, i + 1) + "expected <id>\\t<text>");
    if (!seen.insert(f[0]).second) throw DataError(where(path, i + 1) + "duplicate id '" + f[0] + "'");
    out.push_back({f[0], f[1], -1});
  }
  return out;
}

std::vector<IdentifiedText> read_gold_tsv(const std::string& path, std::vector<std::string>& class_names) {
  const auto lines = read_lines(path);
  if (class_names.empty()) class_names = distinct_field(lines, 1, 3);
  const auto index = class_index(class_names);
  std::vector<IdentifiedText> out;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (skippable(lines[i])) continue;
    const auto f = split_tabs(lines[i], 3);
    if (f.size() != 3) throw DataError(where(path, i + 1) + "expected <id>\\t<class>\\t<text>");
    if (!seen.insert(f[0]).second) throw DataError(where(path, i + 1) + "duplicate id '" + f[0] + "'");
    out.push_back({f[0], f[2], resolve_class(index, f[1], path, i + 1)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Commands

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  std::string metrics_path;
  CLI::App* app = nullptr;

  bool seed_given() const { return app->count("--seed") > 0; }
  std::optional<std::uint64_t> seed_flag() const {
    return seed_given() ? std::optional<std::uint64_t>(seed) : std::nullopt;
  }
  RunConfig load() const {
    return load_config(config_path.empty() ? std::nullopt : std::optional<std::string>(config_path), sets,
                       seed_flag());
  }
};

void add_common(CLI::App* sub, Common& c) {
  c.app = sub;
  sub->add_option("--config", c.config_path, "key = value configuration file");
  sub->add_option("--set", c.sets, "override, key=value (repeatable)");
  sub->add_option("--seed", c.seed, "run seed, overrides MULTIFIT_SEED and the config");
  sub->add_option("--metrics", c.metrics_path, "JSON-lines metrics output");
}

// Metrics stream: opened on demand, config echoed first.
class Metrics {
 public:
  Metrics(const std::string& path, const RunConfig& cfg, const std::string& command) {
    if (path.empty()) return;
    file_ = std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::trunc);
    if (!*file_) throw DataError("cannot write " + path);
    writer_ = std::make_unique<MetricsWriter>(*file_);
    writer_->write_config(cfg, command);
  }
  MetricsSink sink() { return writer_ ? writer_->sink() : MetricsSink{}; }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::unique_ptr<MetricsWriter> writer_;
};

tok::TokenizerModel load_tokenizer(const std::string& path) {
  try {
    return tok::TokenizerModel::load(path);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

void check_tokenizer(const Checkpoint& cp, const tok::TokenizerModel& tokenizer, const std::string& path) {
  if (!cp.meta.tokenizer_hash.empty() && cp.meta.tokenizer_hash != tokenizer.content_hash())
    throw TransferError(path + ": checkpoint was trained with tokenizer " + cp.meta.tokenizer_hash +
                        ", given tokenizer is " + tokenizer.content_hash());
}

Checkpoint load_lm_checkpoint(const std::string& path) {
  Checkpoint cp = load_checkpoint(path);
  if (cp.meta.kind != "lm") throw TransferError(path + ": expected a language model checkpoint, got " + cp.meta.kind);
  return cp;
}

std::vector<int> encode_lines(const std::vector<std::string>& lines, const tok::TokenizerModel& tokenizer) {
  return encode_corpus(lines, tokenizer);
}

struct LmArgs {
  std::string corpus, tokenizer, out, lm, resume;
  int stop_after_epoch = 0;
};

// Runs an LM stage, checkpointing (with optimizer state) after every epoch.
int run_lm_command(const Common& common, const LmArgs& a, bool finetune, std::ostream& out) {
  const auto tokenizer = load_tokenizer(a.tokenizer);
  RunConfig cfg;
  ParameterSet<float> params;
  std::optional<Checkpoint> resume;
  const std::string stage_name = finetune ? "lm-finetune" : "lm-pretrain";
  if (!a.resume.empty()) {
    if (!common.config_path.empty()) throw ConfigError("--resume takes its configuration from the checkpoint");
    resume = load_lm_checkpoint(a.resume);
    check_tokenizer(*resume, tokenizer, a.resume);
    if (resume->meta.stage != stage_name)
      throw TransferError(a.resume + ": checkpoint is from stage '" + resume->meta.stage + "', not " + stage_name);
    if (!resume->optimizer) throw TransferError(a.resume + ": checkpoint has no optimizer state");
    cfg = resume->config;
    for (const auto& kv : common.sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (common.seed_given()) cfg.seed = common.seed;
    cfg.validate();
    params = resume->params;
  } else if (finetune) {
    if (a.lm.empty()) throw ConfigError("lm-finetune needs --lm");
    const Checkpoint lm = load_lm_checkpoint(a.lm);
    check_tokenizer(lm, tokenizer, a.lm);
    cfg = common.load();
    cfg.model = lm.config.model;
    params = lm.params;
  } else {
    cfg = common.load();
    cfg.model.vocab_size = tokenizer.size();
    cfg.model.validate();
    params = build_language_model<float>(cfg.model, cfg.seed);
  }
  check_vocab_compatible(cfg.model, tokenizer);

  const auto lines = read_lines(a.corpus);
  if (lines.empty()) throw DataError(a.corpus + ": empty corpus");
  const CorpusSplit split = split_corpus(lines, cfg.train.valid_fraction);
  Metrics metrics(common.metrics_path, cfg, stage_name);

  const LmStageSpec stage = finetune ? finetune_stage(cfg.train) : pretrain_stage(cfg.train);
  LmTrainer trainer(cfg.model, cfg.train, stage, std::move(params), encode_lines(split.train, tokenizer),
                    encode_lines(split.valid, tokenizer), cfg.seed);
  trainer.set_metrics_sink(metrics.sink());
  if (resume) trainer.resume(resume->meta.epoch, *resume->optimizer);
  const std::string hash = tokenizer.content_hash();
  trainer.set_epoch_callback([&](const LmTrainer& t) {
    Checkpoint cp;
    cp.config = cfg;
    cp.meta.kind = "lm";
    cp.meta.stage = stage_name;
    cp.meta.epoch = t.epoch();
    cp.meta.step = t.step();
    cp.meta.tokenizer_hash = hash;
    cp.params = t.params();
    cp.optimizer = t.optimizer().state();
    save_checkpoint(a.out, cp);
    const auto v = t.last_validation();
    out << stage_name << " epoch " << t.epoch() << " valid_loss " << v.loss << " perplexity " << v.perplexity
        << '\n';
  });
  while (!trainer.done() && (a.stop_after_epoch == 0 || trainer.epoch() < a.stop_after_epoch)) trainer.run_epoch();
  return 0;
}

struct ClfArgs {
  std::string train, valid, test, tokenizer, lm, out;
  bool random_init = false;
};

int run_clf_train(const Common& common, const ClfArgs& a, std::ostream& out) {
  const auto tokenizer = load_tokenizer(a.tokenizer);
  RunConfig cfg = common.load();
  std::optional<Checkpoint> lm;
  if (!a.lm.empty()) {
    lm = load_lm_checkpoint(a.lm);
    check_tokenizer(*lm, tokenizer, a.lm);
    cfg.model = lm->config.model;
  } else {
    cfg.model.vocab_size = tokenizer.size();
  }
  cfg.validate();
  check_vocab_compatible(cfg.model, tokenizer);

  LabeledDataset train = read_labeled_tsv(a.train);
  LabeledDataset valid;
  if (a.valid.empty()) {
    std::tie(train, valid) = split_dataset(train, cfg.bootstrap.valid_fraction);
  } else {
    valid = read_labeled_tsv(a.valid, train.class_names);
  }
  const Index max_tokens = cfg.train.max_tokens;
  const auto train_set = encode_dataset(train, tokenizer, max_tokens);
  const auto valid_set = encode_dataset(valid, tokenizer, max_tokens);

  Metrics metrics(common.metrics_path, cfg, "clf-train");
  const ClassifierResult r = finetune_classifier(lm ? &lm->params : nullptr, cfg.model, cfg.train, train_set,
                                                 valid_set, tokenizer.pad_id(), cfg.seed, metrics.sink());
  out << "best_epoch " << r.best_epoch << " valid_accuracy " << r.best_valid_accuracy << '\n';
  if (!a.test.empty()) {
    const auto test_set = encode_dataset(read_labeled_tsv(a.test, train.class_names), tokenizer, max_tokens);
    const auto ev = evaluate_classifier(r.params, cfg.model, test_set, cfg.train.clf_batch, tokenizer.pad_id());
    out << "test_accuracy " << ev.accuracy << " test_loss " << ev.loss << '\n';
  }
  if (!a.out.empty()) {
    Checkpoint cp;
    cp.config = cfg;
    cp.meta.kind = "classifier";
    cp.meta.stage = "clf-train";
    cp.meta.epoch = r.best_epoch;
    cp.meta.class_names = train.class_names;
    cp.meta.tokenizer_hash = tokenizer.content_hash();
    cp.params = r.params;
    save_checkpoint(a.out, cp);
  }
  return 0;
}

struct BootstrapArgs {
  std::string lm, tokenizer, texts, teacher, gold, classes, out;
};

int run_bootstrap(const Common& common, const BootstrapArgs& a, std::ostream& out) {
  const auto tokenizer = load_tokenizer(a.tokenizer);
  const Checkpoint lm = load_lm_checkpoint(a.lm);
  check_tokenizer(lm, tokenizer, a.lm);
  RunConfig cfg = common.load();
  cfg.model = lm.config.model;
  cfg.validate();

  std::vector<std::string> class_names;
  if (!a.classes.empty()) {
    std::stringstream ss(a.classes);
    for (std::string c; std::getline(ss, c, ',');) class_names.push_back(c);
  }
  const auto gold = read_gold_tsv(a.gold, class_names);
  const auto texts = read_texts_tsv(a.texts);
  const auto pseudo = ingest_teacher_predictions(a.teacher, static_cast<int>(class_names.size()));

  double confidence = 0;
  for (const auto& r : pseudo.records) confidence += r.confidence;
  out << "teacher_records " << pseudo.size() << " mean_confidence "
      << (pseudo.size() ? confidence / static_cast<double>(pseudo.size()) : 0.0) << '\n';

  Metrics metrics(common.metrics_path, cfg, "bootstrap");
  const BootstrapResult r = bootstrap_train(lm.params, cfg.model, cfg.train, tokenizer, texts, pseudo, class_names,
                                            gold, cfg.seed, cfg.bootstrap, metrics.sink());
  out << "pseudo_train " << r.pseudo_train << " pseudo_valid " << r.pseudo_valid << '\n'
      << "gold_examples " << r.gold_examples << " teacher_covered " << r.teacher_covered << '\n'
      << "teacher_accuracy " << r.teacher_accuracy << '\n'
      << "student_accuracy " << r.student_accuracy << '\n';
  if (!a.out.empty()) {
    Checkpoint cp;
    cp.config = cfg;
    cp.meta.kind = "classifier";
    cp.meta.stage = "bootstrap";
    cp.meta.epoch = r.classifier.best_epoch;
    cp.meta.class_names = class_names;
    cp.meta.tokenizer_hash = tokenizer.content_hash();
    cp.params = r.classifier.params;
    save_checkpoint(a.out, cp);
  }
  return 0;
}

struct NoiseArgs {
  std::string lm, tokenizer, train, valid, test, table;
};

int run_noise_bench(const Common& common, const NoiseArgs& a, std::ostream& out) {
  const auto tokenizer = load_tokenizer(a.tokenizer);
  RunConfig cfg = common.load();
  std::optional<Checkpoint> lm;
  if (!a.lm.empty()) {
    lm = load_lm_checkpoint(a.lm);
    check_tokenizer(*lm, tokenizer, a.lm);
    cfg.model = lm->config.model;
  } else {
    cfg.model.vocab_size = tokenizer.size();
  }
  cfg.validate();

  NoiseRunData data;
  data.train = read_labeled_tsv(a.train);
  if (a.valid.empty()) {
    std::tie(data.train, data.valid) = split_dataset(data.train, cfg.bootstrap.valid_fraction);
  } else {
    data.valid = read_labeled_tsv(a.valid, data.train.class_names);
  }
  data.test = read_labeled_tsv(a.test, data.train.class_names);

  Metrics metrics(common.metrics_path, cfg, "noise-bench");
  const auto rows = noise_robustness_run(lm ? &lm->params : nullptr, cfg.model, cfg.train, tokenizer, data,
                                         cfg.noise.grid, cfg.noise.seeds, metrics.sink());
  const std::string table = format_noise_table(rows);
  out << table;
  if (!a.table.empty()) {
    std::ofstream f(a.table, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write " + a.table);
    f << table;
  }
  return 0;
}

struct SpeedArgs {
  std::string cells = "qrnn,lstm";
};

int run_speed_bench(const Common& common, const SpeedArgs& a, CLI::App& sub, std::ostream& out) {
  RunConfig cfg = common.load();
  BenchConfig dims = cfg.bench;
  // Flags given on this subcommand take precedence over bench.* keys.
  const auto flag = [&](const char* name, auto& field) {
    if (sub.count(name) > 0) field = sub.get_option(name)->as<std::remove_reference_t<decltype(field)>>();
  };
  flag("--vocab", dims.vocab);
  flag("--emb", dims.emb);
  flag("--hidden", dims.hidden);
  flag("--layers", dims.layers);
  flag("--bptt", dims.bptt);
  flag("--batch", dims.batch);
  flag("--reps", dims.reps);
  flag("--warmup", dims.warmup);

  std::vector<SpeedResult> results;
  std::stringstream ss(a.cells);
  for (std::string c; std::getline(ss, c, ',');) results.push_back(speed_benchmark(cell_kind_from_string(c), dims, cfg.seed));
  if (results.empty()) throw ConfigError("--cells names no cell");

  char buf[160];
  std::snprintf(buf, sizeof buf, "dims vocab=%d emb=%d hidden=%d layers=%d bptt=%lld batch=%lld reps=%d warmup=%d\n",
                dims.vocab, dims.emb, dims.hidden, dims.layers, static_cast<long long>(dims.bptt),
                static_cast<long long>(dims.batch), dims.reps, dims.warmup);
  out << buf;
  for (const auto& r : results) {
    std::snprintf(buf, sizeof buf, "%s\t%.3f ms/batch\n", to_string(r.cell).c_str(), r.median_ms);
    out << buf;
  }
  if (results.size() >= 2) {
    std::snprintf(buf, sizeof buf, "ratio %s/%s\t%.3f\n", to_string(results[1].cell).c_str(),
                  to_string(results[0].cell).c_str(), results[1].median_ms / results[0].median_ms);
    out << buf;
  }
  return 0;
}

// Tiny double-precision LM with tied embedding, checked against central differences.
GradCheckReport grad_check_lm(CellKind cell, std::uint64_t seed, double eps) {
  ModelConfig cfg;
  cfg.vocab_size = 40;
  cfg.emb_dim = 8;
  cfg.hidden_dim = 12;
  cfg.n_layers = 2;
  cfg.cell = cell;
  auto params = build_language_model<double>(cfg, seed);
  const Index T = 5, B = 2;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> tok(0, cfg.vocab_size - 1);
  std::vector<int> ids(T * B), targets(T * B);
  for (auto& t : ids) t = tok(rng);
  for (auto& t : targets) t = tok(rng);
  return check_gradients(params, [&](Tape<double>& tape, const ParameterSet<double>& ps) {
    auto out = lm_forward(tape, ps, cfg, TokenBatch{ids, T, B}, RecurrentState<double>{}, Mode::eval);
    return lm_loss(out.logits, std::span<const int>(targets));
  }, eps);
}

int run_grad_check(const Common& common, const std::string& cells, double eps, std::ostream& out) {
  const RunConfig cfg = common.load();
  double worst = 0;
  std::stringstream ss(cells);
  char buf[160];
  for (std::string c; std::getline(ss, c, ',');) {
    const CellKind cell = cell_kind_from_string(c);
    const auto report = grad_check_lm(cell, cfg.seed, eps);
    for (const auto& e : report.entries) {
      std::snprintf(buf, sizeof buf, "%s\t%-24s\t%.3e\n", c.c_str(), e.name.c_str(), e.relative_error);
      out << buf;
    }
    worst = std::max(worst, report.max_relative_error());
  }
  std::snprintf(buf, sizeof buf, "max relative error %.3e\n", worst);
  out << buf;
  return worst < 1e-4 ? 0 : 3;
}

int run_tok_train(const Common& common, const std::string& corpus, const std::string& out_path, std::ostream& out) {
  const RunConfig cfg = common.load();
  const auto lines = read_lines(corpus);
  if (lines.empty()) throw DataError(corpus + ": empty corpus");
  const tok::TokenizerModel model = cfg.tokenizer.kind == tok::TokenizerKind::word
                                        ? tok::train_word_model(lines, cfg.tokenizer.max_words)
                                        : tok::train_unigram(lines, cfg.tokenizer.unigram);
  model.save(out_path);
  out << "pieces " << model.size() << " hash " << model.content_hash() << '\n';
  return 0;
}

int run_tok_encode(const std::string& model_path, const std::string& input, bool pieces, std::ostream& out) {
  const auto model = load_tokenizer(model_path);
  const auto emit = [&](const std::string& line) {
    const auto ids = model.encode_ids(line);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i) out << ' ';
      if (pieces)
        out << model.piece(ids[i]).text;
      else
        out << ids[i];
    }
    out << '\n';
  };
  if (input.empty() || input == "-") {
    for (std::string line; std::getline(std::cin, line);) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      emit(line);
    }
  } else {
    for (const auto& line : read_lines(input)) emit(line);
  }
  return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"QRNN language model pretraining, fine-tuning and text classification", "multifit"};
  app.require_subcommand(1);

  Common tok_train_c, lm_pre_c, lm_fine_c, clf_c, boot_c, noise_c, speed_c, grad_c;

  std::string corpus_path, tok_out;
  auto* tok_train = app.add_subcommand("tok-train", "train a subword or word tokenizer");
  add_common(tok_train, tok_train_c);
  tok_train->add_option("--corpus", corpus_path, "one document per line")->required();
  tok_train->add_option("--out", tok_out, "tokenizer model file")->required();

  std::string enc_model, enc_input;
  bool enc_pieces = false;
  auto* tok_encode = app.add_subcommand("tok-encode", "encode text lines to ids");
  tok_encode->add_option("--model", enc_model, "tokenizer model file")->required();
  tok_encode->add_option("--input", enc_input, "text file, default stdin");
  tok_encode->add_flag("--pieces", enc_pieces, "print pieces instead of ids");

  LmArgs pre_args, fine_args;
  auto* lm_pre = app.add_subcommand("lm-pretrain", "pretrain a language model");
  add_common(lm_pre, lm_pre_c);
  lm_pre->add_option("--corpus", pre_args.corpus)->required();
  lm_pre->add_option("--tokenizer", pre_args.tokenizer)->required();
  lm_pre->add_option("--out", pre_args.out, "checkpoint, rewritten after every epoch")->required();
  lm_pre->add_option("--resume", pre_args.resume, "continue from an epoch checkpoint");
  lm_pre->add_option("--stop-after-epoch", pre_args.stop_after_epoch, "end this invocation once this epoch is checkpointed")
      ->check(CLI::NonNegativeNumber);

  auto* lm_fine = app.add_subcommand("lm-finetune", "fine-tune a language model on target-task text");
  add_common(lm_fine, lm_fine_c);
  lm_fine->add_option("--lm", fine_args.lm, "pretrained checkpoint");
  lm_fine->add_option("--corpus", fine_args.corpus)->required();
  lm_fine->add_option("--tokenizer", fine_args.tokenizer)->required();
  lm_fine->add_option("--out", fine_args.out)->required();
  lm_fine->add_option("--resume", fine_args.resume, "continue from an epoch checkpoint");
  lm_fine->add_option("--stop-after-epoch", fine_args.stop_after_epoch, "end this invocation once this epoch is checkpointed")
      ->check(CLI::NonNegativeNumber);

  ClfArgs clf_args;
  auto* clf = app.add_subcommand("clf-train", "train a classifier on labeled TSV");
  add_common(clf, clf_c);
  clf->add_option("--lm", clf_args.lm, "fine-tuned LM checkpoint; random encoder when absent");
  clf->add_option("--train", clf_args.train, "<class>\\t<text>")->required();
  clf->add_option("--valid", clf_args.valid, "selection set; split from --train when absent");
  clf->add_option("--test", clf_args.test);
  clf->add_option("--tokenizer", clf_args.tokenizer)->required();
  clf->add_option("--out", clf_args.out, "classifier checkpoint");

  BootstrapArgs boot_args;
  auto* boot = app.add_subcommand("bootstrap", "train a classifier on teacher pseudo labels");
  add_common(boot, boot_c);
  boot->add_option("--lm", boot_args.lm)->required();
  boot->add_option("--tokenizer", boot_args.tokenizer)->required();
  boot->add_option("--texts", boot_args.texts, "<id>\\t<text>")->required();
  boot->add_option("--teacher", boot_args.teacher, "<id>\\t<class_id>[\\t<confidence>]")->required();
  boot->add_option("--gold", boot_args.gold, "<id>\\t<class>\\t<text>")->required();
  boot->add_option("--classes", boot_args.classes, "comma-separated class names in id order");
  boot->add_option("--out", boot_args.out, "classifier checkpoint");

  NoiseArgs noise_args;
  auto* noise = app.add_subcommand("noise-bench", "label-noise robustness table");
  add_common(noise, noise_c);
  noise->add_option("--lm", noise_args.lm, "fine-tuned LM checkpoint; random arm only when absent");
  noise->add_option("--tokenizer", noise_args.tokenizer)->required();
  noise->add_option("--train", noise_args.train)->required();
  noise->add_option("--valid", noise_args.valid);
  noise->add_option("--test", noise_args.test)->required();
  noise->add_option("--table", noise_args.table, "also write the table here");

  SpeedArgs speed_args;
  auto* speed = app.add_subcommand("speed-bench", "per-batch LM training time of each cell");
  add_common(speed, speed_c);
  speed->add_option("--cells", speed_args.cells, "comma-separated cells");
  speed->add_option("--vocab")->check(CLI::PositiveNumber);
  speed->add_option("--emb")->check(CLI::PositiveNumber);
  speed->add_option("--hidden")->check(CLI::PositiveNumber);
  speed->add_option("--layers")->check(CLI::PositiveNumber);
  speed->add_option("--bptt")->check(CLI::PositiveNumber);
  speed->add_option("--batch")->check(CLI::PositiveNumber);
  speed->add_option("--reps")->check(CLI::PositiveNumber);
  speed->add_option("--warmup")->check(CLI::NonNegativeNumber);

  std::string grad_cells = "qrnn,lstm";
  auto* grad = app.add_subcommand("grad-check", "finite-difference check of a tiny tied LM in double precision");
  add_common(grad, grad_c);
  grad->add_option("--cells", grad_cells, "comma-separated cells");
  double grad_eps = 1e-5;
  grad->add_option("--eps", grad_eps, "central-difference step")->check(CLI::PositiveNumber);

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  if (argv_rev.empty()) {
    err << app.help();
    return 1;
  }
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return 1;
  }

  try {
    if (*tok_train) return run_tok_train(tok_train_c, corpus_path, tok_out, out);
    if (*tok_encode) return run_tok_encode(enc_model, enc_input, enc_pieces, out);
    if (*lm_pre) return run_lm_command(lm_pre_c, pre_args, false, out);
    if (*lm_fine) return run_lm_command(lm_fine_c, fine_args, true, out);
    if (*clf) return run_clf_train(clf_c, clf_args, out);
    if (*boot) return run_bootstrap(boot_c, boot_args, out);
    if (*noise) return run_noise_bench(noise_c, noise_args, out);
    if (*speed) return run_speed_bench(speed_c, speed_args, *speed, out);
    if (*grad) return run_grad_check(grad_c, grad_cells, grad_eps, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const ContractError& e) {
    err << "invalid arguments: " << e.what() << '\n';
    return 1;
  }
  err << app.help();
  return 1;
}

int run_command(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_command(args, std::cout, std::cerr);
}

}  // namespace multifit
