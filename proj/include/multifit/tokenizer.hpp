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

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace multifit::tok {

// Marks word-initial pieces ("▁"), so decoding can restore spaces.
inline constexpr char32_t kWordMarker = U'▁';

enum class TokenizerKind { subword_unigram, word };

std::string to_string(TokenizerKind kind);
TokenizerKind tokenizer_kind_from_string(std::string_view name);

struct Segmentation {
  std::vector<int> ids;
  double log_prob = 0;  // sum of piece log-probabilities
};

// Prefix tree over piece strings.
class PieceTrie {
 public:
  void insert(std::u32string_view piece, int id);

  // Calls f(length, id) for every piece that starts at text[start].
  template <typename F>
  void for_each_prefix(std::u32string_view text, std::size_t start, F&& f) const {
    int node = 0;
    for (std::size_t i = start; i < text.size(); ++i) {
      node = child(node, text[i]);
      if (node < 0) return;
      if (nodes_[node].id >= 0) f(i - start + 1, nodes_[node].id);
    }
  }

 private:
  struct Node {
    std::vector<std::pair<char32_t, int>> children;  // sorted by key
    int id = -1;
  };
  int child(int node, char32_t c) const;
  std::vector<Node> nodes_{Node{}};
};

// Segmentation scores are sums of log-probabilities and depend on summation
// order in the last bits, so scores within this relative distance are ties.
inline constexpr double kScoreTieTolerance = 1e-12;
bool scores_tie(double a, double b);

// Maximum-likelihood segmentation of a code-point sequence. Ties prefer fewer
// pieces, then the lexicographically smallest piece sequence. Positions with
// no matching piece emit `unk_id` scored `unk_log_prob`. `excluded` (if >= 0)
// is treated as absent from the vocabulary.
std::vector<int> best_segmentation(std::u32string_view text, const PieceTrie& trie,
                                   std::span<const std::u32string> pieces,
                                   std::span<const double> log_probs, int unk_id,
                                   double unk_log_prob, int excluded = -1);

class TokenizerModel {
 public:
  struct Piece {
    std::string text;  // UTF-8
    double log_prob = 0;
  };

  static constexpr int kDefaultUnk = 0;
  static constexpr int kDefaultBos = 1;
  static constexpr int kDefaultEos = 2;
  static constexpr int kDefaultPad = 3;

  TokenizerModel(TokenizerKind kind, std::vector<Piece> pieces, double char_coverage,
                 int unk = kDefaultUnk, int bos = kDefaultBos, int eos = kDefaultEos,
                 int pad = kDefaultPad);

  TokenizerKind kind() const { return kind_; }
  double char_coverage() const { return coverage_; }
  int unk_id() const { return unk_; }
  int bos_id() const { return bos_; }
  int eos_id() const { return eos_; }
  int pad_id() const { return pad_; }
  int size() const { return static_cast<int>(pieces_.size()); }
  const Piece& piece(int id) const;
  bool is_special(int id) const { return id == unk_ || id == bos_ || id == eos_ || id == pad_; }
  // -1 when absent.
  int id_of(std::string_view piece) const;

  Segmentation encode(std::string_view text) const;
  std::vector<int> encode_ids(std::string_view text) const { return encode(text).ids; }
  std::string decode(std::span<const int> ids) const;

  void save(std::ostream& os) const;
  void save(const std::string& path) const;
  static TokenizerModel load(std::istream& is);
  static TokenizerModel load(const std::string& path);

  // FNV-1a 64 of the serialized model, as 16 hex digits.
  std::string content_hash() const;

 private:
  double unk_log_prob() const;

  TokenizerKind kind_;
  std::vector<Piece> pieces_;
  std::vector<std::u32string> chars_;
  std::vector<double> log_probs_;
  double coverage_;
  int unk_, bos_, eos_, pad_;
  PieceTrie trie_;
  std::unordered_map<std::string, int> index_;
  double min_log_prob_ = 0;
};

// Maximum-likelihood decoding under a unigram subword model.
inline Segmentation viterbi_segment(std::string_view text, const TokenizerModel& model) {
  return model.encode(text);
}

inline std::string decode(std::span<const int> ids, const TokenizerModel& model) {
  return model.decode(ids);
}

// ---------------------------------------------------------------------------
// Unigram training

struct UnigramTrainerConfig {
  int vocab_size = 15000;  // includes the four special pieces
  double char_coverage = 1.0;
  int seed_multiplier = 4;
  int max_piece_length = 16;
  int em_iterations = 2;  // per pruning round
  double prune_fraction = 0.2;
};

struct UnigramTrainingTrace {
  // Mean per-word log-likelihood at each E-step, grouped by pruning round.
  std::vector<std::vector<double>> em_log_likelihood;
  std::size_t seed_size = 0;
  std::size_t covered_characters = 0;
};

using WordCounts = std::vector<std::pair<std::u32string, double>>;

struct EmStepResult {
  std::vector<double> log_probs;
  double log_likelihood = 0;  // mean per word under the input probabilities
};

// One EM iteration: expected piece counts by lattice forward-backward under
// `log_probs`, then renormalization. Every piece keeps a floor of 1e-12 of
// the total mass so it stays reachable until pruning removes it.
EmStepResult unigram_em_step(std::span<const std::u32string> pieces, std::span<const double> log_probs,
                             const WordCounts& words);

TokenizerModel train_unigram(std::span<const std::string> corpus_lines, const UnigramTrainerConfig& config,
                             UnigramTrainingTrace* trace = nullptr);

// ---------------------------------------------------------------------------
// Word-level baseline

// Whitespace split with leading/trailing ASCII punctuation detached as
// single-character tokens.
std::vector<std::string> word_tokenize(std::string_view text);

// Keeps the `max_words` most frequent words; everything else encodes to UNK.
TokenizerModel train_word_model(std::span<const std::string> corpus_lines, int max_words = 60000);

}  // namespace multifit::tok
