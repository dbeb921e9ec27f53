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
#include "multifit/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <istream>
#include <sstream>

#include "multifit/errors.hpp"

namespace multifit {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* type) {
  throw ConfigError("key '" + std::string(key) + "': cannot parse '" + std::string(value) + "' as " + type);
}

template <typename Int>
Int parse_int(std::string_view key, std::string_view v) {
  Int out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) bad_value(key, v, "an integer");
  return out;
}

double parse_real(std::string_view key, std::string_view v) {
  const std::string s(v);
  char* end = nullptr;
  const double out = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) bad_value(key, v, "a number");
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "a boolean");
}

std::vector<std::string_view> split_list(std::string_view v) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto comma = v.find(',', start);
    auto item = v.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (!item.empty()) out.push_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string fmt_real(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

template <typename T>
std::string fmt_list(const std::vector<T>& xs) {
  std::string out;
  for (const auto& x : xs) {
    if (!out.empty()) out += ",";
    if constexpr (std::is_floating_point_v<T>)
      out += fmt_real(x);
    else
      out += std::to_string(x);
  }
  return out;
}

struct Binding {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
};

#define MF_INT(expr)                                                                      \
  Binding {                                                                               \
    [](const RunConfig& c) { return std::to_string(c.expr); },                            \
        [](RunConfig& c, std::string_view k, std::string_view v) {                        \
          c.expr = parse_int<std::remove_reference_t<decltype(c.expr)>>(k, v);            \
        }                                                                                 \
  }
#define MF_REAL(expr)                                                                             \
  Binding {                                                                                       \
    [](const RunConfig& c) { return fmt_real(c.expr); },                                          \
        [](RunConfig& c, std::string_view k, std::string_view v) { c.expr = parse_real(k, v); }   \
  }
#define MF_BOOL(expr)                                                                             \
  Binding {                                                                                       \
    [](const RunConfig& c) { return std::string(c.expr ? "true" : "false"); },                    \
        [](RunConfig& c, std::string_view k, std::string_view v) { c.expr = parse_bool(k, v); }   \
  }

const std::vector<std::pair<std::string, Binding>>& bindings() {
  static const std::vector<std::pair<std::string, Binding>> table = [] {
    std::vector<std::pair<std::string, Binding>> t{
        {"model.vocab_size", MF_INT(model.vocab_size)},
        {"model.emb_dim", MF_INT(model.emb_dim)},
        {"model.hidden_dim", MF_INT(model.hidden_dim)},
        {"model.n_layers", MF_INT(model.n_layers)},
        {"model.qrnn_widths",
         {[](const RunConfig& c) { return fmt_list(c.model.qrnn_widths); },
          [](RunConfig& c, std::string_view k, std::string_view v) {
            std::vector<int> w;
            for (auto item : split_list(v)) w.push_back(parse_int<int>(k, item));
            if (w.empty()) bad_value(k, v, "a list of widths");
            c.model.qrnn_widths = w;
          }}},
        {"model.cell",
         {[](const RunConfig& c) { return to_string(c.model.cell); },
          [](RunConfig& c, std::string_view, std::string_view v) { c.model.cell = cell_kind_from_string(v); }}},
        {"model.tie_weights", MF_BOOL(model.tie_weights)},
        {"model.clf_hidden", MF_INT(model.clf_hidden)},
        {"model.bn_momentum", MF_REAL(model.bn_momentum)},
        {"model.bn_eps", MF_REAL(model.bn_eps)},
        {"dropout.embedding", MF_REAL(model.dropout.embedding)},
        {"dropout.input", MF_REAL(model.dropout.input)},
        {"dropout.hidden", MF_REAL(model.dropout.hidden)},
        {"dropout.output", MF_REAL(model.dropout.output)},
        {"train.bptt", MF_INT(train.bptt)},
        {"train.lm_batch", MF_INT(train.lm_batch)},
        {"train.clf_batch", MF_INT(train.clf_batch)},
        {"train.pretrain_epochs", MF_INT(train.pretrain_epochs)},
        {"train.finetune_epochs", MF_INT(train.finetune_epochs)},
        {"train.clf_epochs", MF_INT(train.clf_epochs)},
        {"train.pretrain_lr", MF_REAL(train.pretrain_lr)},
        {"train.finetune_lr", MF_REAL(train.finetune_lr)},
        {"train.clf_lr", MF_REAL(train.clf_lr)},
        {"train.weight_decay", MF_REAL(train.weight_decay)},
        {"train.label_smooth_eps", MF_REAL(train.label_smooth_eps)},
        {"train.disc_factor", MF_REAL(train.disc_factor)},
        {"train.pretrain_dropout", MF_REAL(train.pretrain_dropout)},
        {"train.finetune_dropout", MF_REAL(train.finetune_dropout)},
        {"train.clf_dropout", MF_REAL(train.clf_dropout)},
        {"train.clip_norm", MF_REAL(train.clip_norm)},
        {"train.valid_fraction", MF_REAL(train.valid_fraction)},
        {"train.max_tokens", MF_INT(train.max_tokens)},
        {"schedule.pct_warmup", MF_REAL(train.schedule.pct_warmup)},
        {"schedule.div_start", MF_REAL(train.schedule.div_start)},
        {"schedule.div_final", MF_REAL(train.schedule.div_final)},
        {"schedule.mom_max", MF_REAL(train.schedule.mom_max)},
        {"schedule.mom_min", MF_REAL(train.schedule.mom_min)},
        {"optim.beta2", MF_REAL(train.adam.beta2)},
        {"optim.eps", MF_REAL(train.adam.eps)},
        {"tokenizer.kind",
         {[](const RunConfig& c) { return tok::to_string(c.tokenizer.kind); },
          [](RunConfig& c, std::string_view k, std::string_view v) {
            try {
              c.tokenizer.kind = tok::tokenizer_kind_from_string(v);
            } catch (const DataError&) {
              bad_value(k, v, "a tokenizer kind (subword-unigram or word)");
            }
          }}},
        {"tokenizer.vocab_size", MF_INT(tokenizer.unigram.vocab_size)},
        {"tokenizer.char_coverage", MF_REAL(tokenizer.unigram.char_coverage)},
        {"tokenizer.seed_multiplier", MF_INT(tokenizer.unigram.seed_multiplier)},
        {"tokenizer.max_piece_length", MF_INT(tokenizer.unigram.max_piece_length)},
        {"tokenizer.em_iterations", MF_INT(tokenizer.unigram.em_iterations)},
        {"tokenizer.prune_fraction", MF_REAL(tokenizer.unigram.prune_fraction)},
        {"tokenizer.max_words", MF_INT(tokenizer.max_words)},
        {"bootstrap.valid_fraction", MF_REAL(bootstrap.valid_fraction)},
        {"bootstrap.min_confidence", MF_REAL(bootstrap.min_confidence)},
        {"noise.grid",
         {[](const RunConfig& c) { return fmt_list(c.noise.grid); },
          [](RunConfig& c, std::string_view k, std::string_view v) {
            std::vector<double> g;
            for (auto item : split_list(v)) g.push_back(parse_real(k, item));
            if (g.empty()) bad_value(k, v, "a list of probabilities");
            c.noise.grid = g;
          }}},
        {"noise.seeds",
         {[](const RunConfig& c) { return fmt_list(c.noise.seeds); },
          [](RunConfig& c, std::string_view k, std::string_view v) {
            std::vector<std::uint64_t> s;
            for (auto item : split_list(v)) s.push_back(parse_int<std::uint64_t>(k, item));
            if (s.empty()) bad_value(k, v, "a list of seeds");
            c.noise.seeds = s;
          }}},
        {"bench.vocab", MF_INT(bench.vocab)},
        {"bench.emb", MF_INT(bench.emb)},
        {"bench.hidden", MF_INT(bench.hidden)},
        {"bench.layers", MF_INT(bench.layers)},
        {"bench.bptt", MF_INT(bench.bptt)},
        {"bench.batch", MF_INT(bench.batch)},
        {"bench.reps", MF_INT(bench.reps)},
        {"bench.warmup", MF_INT(bench.warmup)},
        {"run.seed", MF_INT(seed)},
    };
    std::sort(t.begin(), t.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    return t;
  }();
  return table;
}

#undef MF_INT
#undef MF_REAL
#undef MF_BOOL

const Binding& find_binding(std::string_view key) {
  const auto& t = bindings();
  auto it = std::lower_bound(t.begin(), t.end(), key, [](const auto& e, std::string_view k) { return e.first < k; });
  if (it == t.end() || it->first != key) throw ConfigError("unknown key '" + std::string(key) + "'");
  return it->second;
}

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) {
  find_binding(key).set(*this, key, trim(value));
}

std::string RunConfig::get(std::string_view key) const { return find_binding(key).get(*this); }

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& [name, b] : bindings()) out.push_back(name);
    return out;
  }();
  return k;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [name, b] : bindings()) out += name + " = " + b.get(*this) + "\n";
  return out;
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (tokenizer.unigram.vocab_size < 5) throw ConfigError("tokenizer.vocab_size must be >= 5");
  if (!(tokenizer.unigram.char_coverage > 0 && tokenizer.unigram.char_coverage <= 1))
    throw ConfigError("tokenizer.char_coverage must lie in (0,1]");
  if (tokenizer.max_words < 1) throw ConfigError("tokenizer.max_words must be >= 1");
  if (!(bootstrap.valid_fraction > 0 && bootstrap.valid_fraction < 1))
    throw ConfigError("bootstrap.valid_fraction must lie in (0,1)");
  for (double p : noise.grid)
    if (!(p >= 0 && p <= 0.75)) throw ConfigError("noise.grid value " + fmt_real(p) + " outside [0, 0.75]");
  if (bench.reps < 5) throw ConfigError("bench.reps must be >= 5");
  if (bench.warmup < 0 || bench.vocab < 2 || bench.emb < 1 || bench.hidden < 1 || bench.layers < 1 ||
      bench.bptt < 1 || bench.batch < 1)
    throw ConfigError("bench dimensions must be positive");
}

void apply_config_text(RunConfig& cfg, std::istream& in, const std::string& source) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value', got '" + body + "'");
    try {
      cfg.set(trim(std::string_view(body).substr(0, eq)), std::string_view(body).substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
}

RunConfig load_config(const std::optional<std::string>& path, const std::vector<std::string>& overrides,
                      std::optional<std::uint64_t> seed_flag) {
  RunConfig cfg;
  if (const char* env = std::getenv("MULTIFIT_SEED"); env && *env) {
    try {
      cfg.set("run.seed", env);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("MULTIFIT_SEED: ") + e.what());
    }
  }
  if (path) {
    std::ifstream in(*path);
    if (!in) throw ConfigError("cannot open config file '" + *path + "'");
    apply_config_text(cfg, in, *path);
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not key=value");
    try {
      cfg.set(trim(std::string_view(o).substr(0, eq)), std::string_view(o).substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("--set " + o + ": " + e.what());
    }
  }
  if (seed_flag) cfg.seed = *seed_flag;
  cfg.validate();
  return cfg;
}

}  // namespace multifit
