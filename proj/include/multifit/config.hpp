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
#include <string_view>
#include <vector>

#include "multifit/bootstrap.hpp"
#include "multifit/network.hpp"
#include "multifit/tokenizer.hpp"
#include "multifit/training.hpp"

namespace multifit {

struct TokenizerConfig {
  tok::TokenizerKind kind = tok::TokenizerKind::subword_unigram;
  tok::UnigramTrainerConfig unigram;
  int max_words = 60000;
};

struct NoiseConfig {
  std::vector<double> grid{0.0, 0.25, 0.5, 0.75};
  std::vector<std::uint64_t> seeds{1, 2, 3};
};

struct BenchConfig {
  int vocab = 1000;
  int emb = 64;
  int hidden = 256;
  int layers = 2;
  Index bptt = 70;
  Index batch = 64;
  int reps = 7;
  int warmup = 3;
};

// Every tunable value, addressable as `section.name`.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  TokenizerConfig tokenizer;
  BootstrapOptions bootstrap;
  NoiseConfig noise;
  BenchConfig bench;
  std::uint64_t seed = 1;

  // ConfigError for unknown keys or unparsable values.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  static const std::vector<std::string>& keys();

  // All keys, sorted, one `key = value` per line; parses back to an equal config.
  std::string to_text() const;
  void validate() const;
};

// Applies `key = value` lines (blank lines and `#` comments ignored). Errors
// name `source`, the line and the key.
void apply_config_text(RunConfig& cfg, std::istream& in, const std::string& source);

// Precedence: defaults < MULTIFIT_SEED < file < overrides ("key=value") < seed flag.
RunConfig load_config(const std::optional<std::string>& path, const std::vector<std::string>& overrides,
                      std::optional<std::uint64_t> seed_flag = std::nullopt);

}  // namespace multifit
