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
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "multifit/checkpoint.hpp"
#include "multifit/cli.hpp"
#include "multifit/config.hpp"
#include "multifit/metrics.hpp"
#include "multifit/speed.hpp"
#include "support/synthetic.hpp"

using namespace multifit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("multifit_test_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(file(name), std::ios::binary) << text;
    return file(name);
  }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_command(args, out, err);
  return {code, out.str(), err.str()};
}

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.vocab_size = 40;
  cfg.emb_dim = 8;
  cfg.hidden_dim = 12;
  cfg.n_layers = 2;
  cfg.clf_hidden = 6;
  return cfg;
}

bool bitwise_equal(const Tensor<float>& a, const Tensor<float>& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<std::size_t>(a.size())) == 0;
}

Checkpoint sample_checkpoint() {
  Checkpoint cp;
  cp.config.model = tiny_model();
  cp.config.seed = 77;
  cp.meta.stage = "lm-pretrain";
  cp.meta.epoch = 3;
  cp.meta.step = 120;
  cp.meta.tokenizer_hash = "0123456789abcdef";
  cp.params = build_language_model<float>(cp.config.model, 5);
  Adam<float>::State st;
  std::mt19937_64 g(3);
  std::normal_distribution<float> n;
  for (const auto& e : cp.params) {
    Tensor<float> m(e.value.shape()), v(e.value.shape());
    for (Index i = 0; i < m.size(); ++i) {
      m[i] = n(g);
      v[i] = std::abs(n(g));
    }
    st.m.push_back(m);
    st.v.push_back(v);
  }
  st.step = 120;
  st.beta1_product = std::pow(0.9, 120) * 1.0000001;
  cp.optimizer = st;
  return cp;
}

}  // namespace

TEST_CASE("configuration precedence and errors") {
  TempDir dir;
  const RunConfig defaults;

  SUBCASE("empty file gives defaults") {
    const auto cfg = load_config(dir.write("empty.cfg", ""), {});
    CHECK(cfg.to_text() == defaults.to_text());
    CHECK(cfg.train.weight_decay == 0.01);
    CHECK(cfg.train.label_smooth_eps == 0.1);
    CHECK(cfg.model.n_layers == 4);
    CHECK(cfg.model.hidden_dim == 1550);
  }
  SUBCASE("file then overrides then seed flag") {
    const auto path = dir.write("a.cfg", "# comment\nmodel.hidden_dim = 64\ntrain.bptt = 35\nrun.seed = 4\n\n");
    auto cfg = load_config(path, {});
    CHECK(cfg.model.hidden_dim == 64);
    CHECK(cfg.train.bptt == 35);
    CHECK(cfg.seed == 4);
    cfg = load_config(path, {"train.bptt=20"});
    CHECK(cfg.train.bptt == 20);
    CHECK(cfg.model.hidden_dim == 64);
    cfg = load_config(path, {"run.seed=9"}, 11);
    CHECK(cfg.seed == 11);
  }
  SUBCASE("seed environment variable sits below the file") {
    ::setenv("MULTIFIT_SEED", "123", 1);
    CHECK(load_config(std::nullopt, {}).seed == 123);
    CHECK(load_config(dir.write("s.cfg", "run.seed = 5\n"), {}).seed == 5);
    CHECK(load_config(std::nullopt, {}, 6).seed == 6);
    ::setenv("MULTIFIT_SEED", "abc", 1);
    CHECK_THROWS_AS(load_config(std::nullopt, {}), ConfigError);
    ::unsetenv("MULTIFIT_SEED");
  }
  SUBCASE("misspelled key names key and line") {
    const auto path = dir.write("bad.cfg", "model.hidden_dim = 64\nmodel.hiden_dim = 3\n");
    try {
      load_config(path, {});
      FAIL("no error");
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("model.hiden_dim") != std::string::npos);
      CHECK(msg.find(":2:") != std::string::npos);
    }
    CHECK_THROWS_AS(load_config(dir.write("v.cfg", "train.bptt = seventy\n"), {}), ConfigError);
    CHECK_THROWS_AS(load_config(dir.write("n.cfg", "train.bptt 70\n"), {}), ConfigError);
    CHECK_THROWS_AS(load_config(std::nullopt, {"nope=1"}), ConfigError);
  }
  SUBCASE("text form parses back to an equal config") {
    RunConfig cfg;
    cfg.set("schedule.div_start", "17.5");
    cfg.set("noise.grid", "0,0.3");
    cfg.set("model.cell", "lstm");
    std::istringstream in(cfg.to_text());
    RunConfig back;
    apply_config_text(back, in, "text");
    CHECK(back.to_text() == cfg.to_text());
    CHECK(back.model.cell == CellKind::lstm);
    for (const auto& key : RunConfig::keys()) CHECK(back.get(key) == cfg.get(key));
  }
}

TEST_CASE("checkpoint round trip") {
  TempDir dir;
  const Checkpoint cp = sample_checkpoint();
  const auto path = dir.file("lm.mfit");
  save_checkpoint(path, cp);
  const Checkpoint back = load_checkpoint(path);

  CHECK(back.config.to_text() == cp.config.to_text());
  CHECK(back.meta.kind == "lm");
  CHECK(back.meta.stage == cp.meta.stage);
  CHECK(back.meta.epoch == 3);
  CHECK(back.meta.step == 120);
  CHECK(back.meta.tokenizer_hash == cp.meta.tokenizer_hash);
  REQUIRE(back.params.size() == cp.params.size());
  for (std::size_t i = 0; i < cp.params.size(); ++i) {
    const auto& a = cp.params.entry(i);
    const auto& b = back.params.entry(i);
    CHECK(a.name == b.name);
    CHECK(a.group == b.group);
    CHECK(a.trainable == b.trainable);
    CHECK(bitwise_equal(a.value, b.value));
  }
  SUBCASE("tie restored as an alias") {
    CHECK(back.params.aliases() == cp.params.aliases());
    CHECK(back.params.index_of("decoder.weight") == back.params.index_of("encoder.embedding"));
    const std::string bytes = serialize_checkpoint(cp);
    // The alias appears once, in the meta lines; no tensor record carries it.
    std::size_t mentions = 0;
    for (std::size_t pos = 0; (pos = bytes.find("decoder.weight", pos)) != std::string::npos; ++pos) ++mentions;
    CHECK(mentions == 1);
  }
  SUBCASE("optimizer state") {
    REQUIRE(back.optimizer);
    CHECK(back.optimizer->step == 120);
    CHECK(back.optimizer->beta1_product == cp.optimizer->beta1_product);
    for (std::size_t i = 0; i < cp.optimizer->m.size(); ++i) {
      CHECK(bitwise_equal(back.optimizer->m[i], cp.optimizer->m[i]));
      CHECK(bitwise_equal(back.optimizer->v[i], cp.optimizer->v[i]));
    }
  }
  SUBCASE("serialization is deterministic") { CHECK(serialize_checkpoint(back) == serialize_checkpoint(cp)); }
  SUBCASE("classifier with buffers and class names") {
    Checkpoint c;
    c.config.model = tiny_model();
    c.meta.kind = "classifier";
    c.meta.class_names = {"ccat", "ecat", "gcat", "mcat"};
    c.params = build_classifier<float>(c.config.model, 4, 8);
    const Checkpoint r = parse_checkpoint(serialize_checkpoint(c));
    CHECK(r.meta.class_names == c.meta.class_names);
    CHECK_FALSE(r.optimizer);
    CHECK_FALSE(r.params.entry(r.params.index_of("head.bn.running_var")).trainable);
    for (std::size_t i = 0; i < c.params.size(); ++i) {
      CHECK(r.params.entry(i).group == c.params.entry(i).group);
      CHECK(bitwise_equal(r.params.entry(i).value, c.params.entry(i).value));
    }
  }
}

TEST_CASE("checkpoint load errors") {
  const std::string bytes = serialize_checkpoint(sample_checkpoint());
  SUBCASE("every truncation is a checksum error") {
    for (std::size_t n : {std::size_t{0}, std::size_t{3}, std::size_t{8}, std::size_t{20}, bytes.size() / 2,
                          bytes.size() - 9, bytes.size() - 1})
      CHECK_THROWS_AS(parse_checkpoint(std::string_view(bytes).substr(0, n)), ChecksumError);
  }
  SUBCASE("flipped payload byte") {
    std::string b = bytes;
    b[b.size() / 2] ^= 0x10;
    CHECK_THROWS_AS(parse_checkpoint(b), ChecksumError);
  }
  SUBCASE("bad magic") {
    std::string b = bytes;
    b[0] = 'X';
    CHECK_THROWS_AS(parse_checkpoint(b), BadMagicError);
  }
  SUBCASE("bad version") {
    std::string b = bytes;
    b[4] = 2;
    CHECK_THROWS_AS(parse_checkpoint(b), BadVersionError);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_checkpoint("/nonexistent/dir/x.mfit"), CheckpointError); }
}

TEST_CASE("metrics lines") {
  MetricRecord r;
  r.stage = "lm-pretrain";
  r.epoch = 2;
  r.step = 40;
  r.split = "valid";
  r.loss = 1.25;
  r.perplexity = std::exp(1.25);
  r.lr = 1e-3;
  r.momentum = 0.9;
  r.wallclock_ms = 12.5;
  auto j = nlohmann::json::parse(metric_line(r));
  CHECK(j["stage"] == "lm-pretrain");
  CHECK(j["epoch"] == 2);
  CHECK(j["step"] == 40);
  CHECK(j["split"] == "valid");
  CHECK(j["loss"].get<double>() == 1.25);
  CHECK(j["perplexity"].get<double>() == std::exp(1.25));
  CHECK_FALSE(j.contains("accuracy"));
  r.perplexity.reset();
  r.accuracy = 0.5;
  j = nlohmann::json::parse(metric_line(r));
  CHECK_FALSE(j.contains("perplexity"));
  CHECK(j["accuracy"].get<double>() == 0.5);

  RunConfig cfg;
  const auto c = nlohmann::json::parse(config_line(cfg, "lm-pretrain"));
  CHECK(c["stage"] == "config");
  CHECK(c["config"]["train.weight_decay"] == cfg.get("train.weight_decay"));
  CHECK(c["config"].size() == RunConfig::keys().size());
}

TEST_CASE("speed benchmark") {
  BenchConfig dims;
  dims.vocab = 50;
  dims.emb = 8;
  dims.hidden = 16;
  dims.bptt = 10;
  dims.batch = 4;
  dims.reps = 5;
  dims.warmup = 1;
  const auto r = speed_benchmark(CellKind::qrnn, dims);
  CHECK(r.samples_ms.size() == 5);
  CHECK(r.median_ms > 0);
  CHECK(r.median_ms == median(r.samples_ms));
  // Self-comparison: equal up to timing noise.
  const double ratio = speed_benchmark(CellKind::qrnn, dims).median_ms / r.median_ms;
  CHECK(ratio > 0.5);
  CHECK(ratio < 2.0);
  dims.reps = 4;
  CHECK_THROWS_AS(speed_benchmark(CellKind::lstm, dims), ConfigError);
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
}

TEST_CASE("file readers") {
  TempDir dir;
  const auto labeled = dir.write("l.tsv", "b\tsecond doc\r\n# note\na\tfirst doc\n\nb\tthird\n");
  const auto d = read_labeled_tsv(labeled);
  CHECK(d.class_names == std::vector<std::string>{"a", "b"});
  REQUIRE(d.examples.size() == 3);
  CHECK(d.examples[0].label == 1);
  CHECK(d.examples[0].text == "second doc");
  CHECK(d.examples[1].label == 0);
  CHECK_THROWS_AS(read_labeled_tsv(labeled, {"a", "c"}), DataError);
  CHECK_THROWS_AS(read_labeled_tsv(dir.write("x.tsv", "no tab here\n")), DataError);
  CHECK_THROWS_AS(read_labeled_tsv(dir.file("missing.tsv")), DataError);

  const auto texts = read_texts_tsv(dir.write("t.tsv", "id1\thello world\nid2\tbye\n"));
  CHECK(texts.size() == 2);
  CHECK(texts[1].id == "id2");
  CHECK_THROWS_AS(read_texts_tsv(dir.write("t2.tsv", "id1\ta\nid1\tb\n")), DataError);

  std::vector<std::string> classes;
  const auto gold = read_gold_tsv(dir.write("g.tsv", "x\tpos\tgood\ny\tneg\tbad\n"), classes);
  CHECK(classes == std::vector<std::string>{"neg", "pos"});
  CHECK(gold[0].label == 1);
  CHECK(gold[1].text == "bad");
}

TEST_CASE("command line exit codes") {
  TempDir dir;
  CHECK(cli({}).code == 1);
  CHECK(cli({}).err.find("Usage") != std::string::npos);
  CHECK(cli({"frobnicate"}).code == 1);
  CHECK(cli({"lm-pretrain"}).code == 1);
  CHECK(cli({"--help"}).code == 0);

  const auto g = cli({"grad-check"});
  CHECK(g.code == 0);
  CHECK(g.out.find("encoder.embedding") != std::string::npos);
  CHECK(g.out.find("max relative error") != std::string::npos);

  const auto s = cli({"speed-bench", "--cells", "qrnn,lstm", "--vocab", "50", "--emb", "8", "--hidden", "16",
                      "--bptt", "10", "--batch", "4", "--reps", "5", "--warmup", "1"});
  CHECK(s.code == 0);
  CHECK(s.out.find("qrnn\t") != std::string::npos);
  CHECK(s.out.find("lstm\t") != std::string::npos);
  CHECK(s.out.find("ratio lstm/qrnn") != std::string::npos);
  CHECK(cli({"speed-bench", "--reps", "3", "--hidden", "8"}).code == 1);

  const auto corpus = dir.write("c.txt", "a b c\n");
  CHECK(cli({"tok-train", "--corpus", dir.file("none.txt"), "--out", dir.file("t.model")}).code == 2);
  CHECK(cli({"tok-train", "--corpus", corpus, "--out", dir.file("t.model"), "--set", "tokenizer.nope=1"}).code == 1);
  CHECK(cli({"tok-train", "--corpus", corpus, "--out", dir.file("t.model"), "--config", dir.file("none.cfg")}).code ==
        1);
  CHECK(cli({"clf-train", "--train", corpus, "--tokenizer", dir.write("bad.model", "garbage")}).code == 2);
}

TEST_CASE("command line pipeline") {
  TempDir dir;
  const auto task = testing::KeywordTask::make(3, 6, 30, 4);
  std::string corpus_text;
  for (const auto& line : task.corpus(300, 1)) corpus_text += line + "\n";
  const auto corpus = dir.write("corpus.txt", corpus_text);
  const auto to_tsv = [&](const LabeledDataset& d) {
    std::string s;
    for (const auto& e : d.examples) s += d.class_names[e.label] + "\t" + e.text + "\n";
    return s;
  };
  const auto train = dir.write("train.tsv", to_tsv(task.dataset(90, 2, "train")));
  const auto test = dir.write("test.tsv", to_tsv(task.dataset(60, 3, "test")));
  const auto cfg = dir.write("run.cfg",
                             "model.emb_dim = 16\nmodel.hidden_dim = 24\nmodel.n_layers = 2\nmodel.clf_hidden = 8\n"
                             "tokenizer.vocab_size = 120\ntrain.bptt = 12\ntrain.lm_batch = 8\ntrain.clf_batch = 16\n"
                             "train.pretrain_epochs = 2\ntrain.finetune_epochs = 1\ntrain.clf_epochs = 2\n"
                             "noise.grid = 0,0.5\nnoise.seeds = 1\n");
  const auto tokenizer = dir.file("tok.model");

  REQUIRE(cli({"tok-train", "--config", cfg, "--corpus", corpus, "--out", tokenizer}).code == 0);
  const auto enc = cli({"tok-encode", "--model", tokenizer, "--input", corpus});
  CHECK(enc.code == 0);
  CHECK(std::count(enc.out.begin(), enc.out.end(), '\n') == 300);

  const auto lm = dir.file("lm.mfit");
  const auto metrics = dir.file("pre.jsonl");
  const auto pre = cli({"lm-pretrain", "--config", cfg, "--corpus", corpus, "--tokenizer", tokenizer, "--out", lm,
                        "--metrics", metrics, "--seed", "3"});
  REQUIRE(pre.code == 0);
  const Checkpoint cp = load_checkpoint(lm);
  CHECK(cp.meta.epoch == 2);
  CHECK(cp.meta.stage == "lm-pretrain");
  CHECK(cp.config.seed == 3);
  CHECK(cp.optimizer.has_value());

  SUBCASE("metrics stream") {
    std::istringstream in(read_file(metrics));
    std::string line;
    std::getline(in, line);
    const auto head = nlohmann::json::parse(line);
    CHECK(head["stage"] == "config");
    CHECK(head["config"]["run.seed"] == "3");
    double last_ms = -1;
    int valid_lines = 0;
    while (std::getline(in, line)) {
      const auto j = nlohmann::json::parse(line);
      CHECK(j["stage"] == "lm-pretrain");
      CHECK(std::abs(j["perplexity"].get<double>() - std::exp(j["loss"].get<double>())) <=
            1e-9 * j["perplexity"].get<double>());
      CHECK(j["wallclock_ms"].get<double>() >= last_ms);
      last_ms = j["wallclock_ms"].get<double>();
      valid_lines += j["split"] == "valid";
    }
    CHECK(valid_lines == 2);
  }
  SUBCASE("finetune, classify, noise and bootstrap") {
    const auto ft = dir.file("ft.mfit");
    REQUIRE(cli({"lm-finetune", "--config", cfg, "--lm", lm, "--corpus", corpus, "--tokenizer", tokenizer, "--out",
                 ft})
                .code == 0);
    CHECK(load_checkpoint(ft).meta.stage == "lm-finetune");

    const auto clf_out = dir.file("clf.mfit");
    const auto clf = cli({"clf-train", "--config", cfg, "--lm", ft, "--train", train, "--test", test, "--tokenizer",
                          tokenizer, "--out", clf_out});
    REQUIRE(clf.code == 0);
    CHECK(clf.out.find("test_accuracy") != std::string::npos);
    const auto cc = load_checkpoint(clf_out);
    CHECK(cc.meta.kind == "classifier");
    CHECK(cc.meta.class_names == task.dataset(1, 1, "x").class_names);

    const auto noise = cli({"noise-bench", "--config", cfg, "--lm", ft, "--train", train, "--test", test,
                            "--tokenizer", tokenizer, "--table", dir.file("noise.tsv")});
    REQUIRE(noise.code == 0);
    CHECK(noise.out.rfind("p\tacc_pretrained\tacc_random\tbaseline\n", 0) == 0);
    CHECK(read_file(dir.file("noise.tsv")) == noise.out);

    // Teacher: gold labels of the test file, two of them wrong.
    std::vector<std::string> classes;
    std::string gold_tsv, texts_tsv, teacher_tsv;
    const auto test_set = read_labeled_tsv(test);
    for (std::size_t i = 0; i < test_set.examples.size(); ++i) {
      const auto& e = test_set.examples[i];
      const std::string id = "d" + std::to_string(i);
      texts_tsv += id + "\t" + e.text + "\n";
      if (i < 20) gold_tsv += id + "\t" + test_set.class_names[e.label] + "\t" + e.text + "\n";
      const int label = i < 2 ? (e.label + 1) % 3 : e.label;
      teacher_tsv += id + "\t" + std::to_string(label) + "\n";
    }
    const auto boot = cli({"bootstrap", "--config", cfg, "--lm", ft, "--tokenizer", tokenizer, "--texts",
                           dir.write("texts.tsv", texts_tsv), "--teacher", dir.write("teacher.tsv", teacher_tsv),
                           "--gold", dir.write("gold.tsv", gold_tsv)});
    REQUIRE(boot.code == 0);
    CHECK(boot.out.find("teacher_accuracy 0.9\n") != std::string::npos);
    CHECK(boot.out.find("pseudo_train 36") != std::string::npos);
    const auto dup = cli({"bootstrap", "--config", cfg, "--lm", ft, "--tokenizer", tokenizer, "--texts",
                          dir.file("texts.tsv"), "--teacher", dir.write("dup.tsv", "d0\t1\nd0\t2\n"), "--gold",
                          dir.file("gold.tsv")});
    CHECK(dup.code == 2);
    CHECK(dup.err.find(":2:") != std::string::npos);
  }
  SUBCASE("resume reproduces an uninterrupted run") {
    // Interrupt the same 2-epoch run after epoch 1, then continue it.
    const auto part = dir.file("part.mfit");
    REQUIRE(cli({"lm-pretrain", "--config", cfg, "--stop-after-epoch", "1", "--corpus", corpus, "--tokenizer",
                 tokenizer, "--out", part, "--seed", "3"})
                .code == 0);
    CHECK(load_checkpoint(part).meta.epoch == 1);
    REQUIRE(cli({"lm-pretrain", "--resume", part, "--corpus", corpus, "--tokenizer", tokenizer, "--out", part})
                .code == 0);
    const Checkpoint resumed = load_checkpoint(part);
    CHECK(resumed.meta.epoch == 2);
    for (std::size_t i = 0; i < cp.params.size(); ++i)
      CHECK(bitwise_equal(resumed.params.entry(i).value, cp.params.entry(i).value));
  }
  SUBCASE("wrong tokenizer or stage is a data error") {
    const auto other = dir.file("other.model");
    REQUIRE(cli({"tok-train", "--config", cfg, "--set", "tokenizer.vocab_size=90", "--corpus", corpus, "--out",
                 other})
                .code == 0);
    CHECK(cli({"lm-finetune", "--config", cfg, "--lm", lm, "--corpus", corpus, "--tokenizer", other, "--out",
               dir.file("x.mfit")})
              .code == 2);
    CHECK(cli({"lm-finetune", "--resume", lm, "--corpus", corpus, "--tokenizer", tokenizer, "--out",
               dir.file("x.mfit")})
              .code == 2);
  }
  SUBCASE("divergence is a numeric failure") {
    CHECK(cli({"lm-pretrain", "--config", cfg, "--set", "train.pretrain_lr=1e30", "--set", "train.clip_norm=0",
               "--corpus", corpus, "--tokenizer", tokenizer, "--out", dir.file("nan.mfit")})
              .code == 3);
  }
}
