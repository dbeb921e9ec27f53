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
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <unordered_map>

#include "multifit/errors.hpp"
#include "multifit/tokenizer.hpp"
#include "multifit/utf8.hpp"

namespace multifit::tok {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kMassFloor = 1e-12;

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

PieceTrie build_trie(std::span<const std::u32string> pieces) {
  PieceTrie trie;
  for (std::size_t i = 0; i < pieces.size(); ++i) trie.insert(pieces[i], static_cast<int>(i));
  return trie;
}

struct Vocabulary {
  std::vector<std::u32string> pieces;
  std::vector<double> log_probs;
  std::size_t n_required = 0;  // the first n_required pieces are single characters
};

}  // namespace

EmStepResult unigram_em_step(std::span<const std::u32string> pieces, std::span<const double> log_probs,
                             const WordCounts& words) {
  if (pieces.size() != log_probs.size()) throw ContractError("em step: pieces and log probs disagree");
  const PieceTrie trie = build_trie(pieces);
  std::vector<double> counts(pieces.size(), 0.0);
  double log_likelihood = 0, occurrences = 0;
  std::vector<double> alpha, beta;
  for (const auto& [word, count] : words) {
    const std::size_t n = word.size();
    alpha.assign(n + 1, kNegInf);
    beta.assign(n + 1, kNegInf);
    alpha[0] = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (alpha[i] == kNegInf) continue;
      trie.for_each_prefix(word, i, [&](std::size_t len, int id) {
        if (log_probs[id] != kNegInf) alpha[i + len] = log_add(alpha[i + len], alpha[i] + log_probs[id]);
      });
    }
    const double z = alpha[n];
    if (z == kNegInf) throw ContractError("em step: word '" + utf8::encode(word) + "' cannot be segmented");
    beta[n] = 0;
    for (std::size_t i = n; i-- > 0;) {
      trie.for_each_prefix(word, i, [&](std::size_t len, int id) {
        if (log_probs[id] != kNegInf) beta[i] = log_add(beta[i], log_probs[id] + beta[i + len]);
      });
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (alpha[i] == kNegInf) continue;
      trie.for_each_prefix(word, i, [&](std::size_t len, int id) {
        if (log_probs[id] != kNegInf)
          counts[id] += count * std::exp(alpha[i] + log_probs[id] + beta[i + len] - z);
      });
    }
    log_likelihood += count * z;
    occurrences += count;
  }
  double total = 0;
  for (double c : counts) total += c;
  const double floor = total * kMassFloor;
  double floored_total = 0;
  for (double& c : counts) {
    c = std::max(c, floor);
    floored_total += c;
  }
  EmStepResult out;
  out.log_probs.resize(pieces.size());
  for (std::size_t i = 0; i < pieces.size(); ++i) out.log_probs[i] = std::log(counts[i] / floored_total);
  out.log_likelihood = occurrences > 0 ? log_likelihood / occurrences : 0.0;
  return out;
}

TokenizerModel train_unigram(std::span<const std::string> corpus_lines, const UnigramTrainerConfig& config,
                             UnigramTrainingTrace* trace) {
  if (!(config.char_coverage > 0 && config.char_coverage <= 1))
    throw ConfigError("tokenizer.coverage must lie in (0,1]");
  if (config.max_piece_length < 1 || config.seed_multiplier < 1 || config.em_iterations < 1)
    throw ConfigError("tokenizer: max piece length, seed multiplier and EM iterations must be positive");
  if (!(config.prune_fraction > 0 && config.prune_fraction < 1))
    throw ConfigError("tokenizer: prune fraction must lie in (0,1)");

  // Word frequencies, each word carrying the word-initial marker.
  std::map<std::u32string, double> word_counts;
  for (const auto& line : corpus_lines)
    for (std::string_view w : utf8::split_whitespace(line)) {
      std::u32string chars(1, kWordMarker);
      chars += utf8::decode(w);
      word_counts[chars] += 1;
    }
  if (word_counts.empty()) throw DataError("tokenizer training corpus is empty");

  // Character coverage over real characters; the marker is always kept.
  std::map<char32_t, double> char_counts;
  double char_total = 0;
  for (const auto& [w, c] : word_counts)
    for (std::size_t i = 1; i < w.size(); ++i) {
      char_counts[w[i]] += c;
      char_total += c;
    }
  std::vector<std::pair<char32_t, double>> ranked_chars(char_counts.begin(), char_counts.end());
  std::stable_sort(ranked_chars.begin(), ranked_chars.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::pair<char32_t, double>> covered;
  double cumulative = 0;
  for (const auto& rc : ranked_chars) {
    if (cumulative >= config.char_coverage * char_total * (1 - 1e-12)) break;
    covered.push_back(rc);
    cumulative += rc.second;
  }
  const auto is_covered = [&](char32_t c) {
    return c == kWordMarker ||
           std::any_of(covered.begin(), covered.end(), [c](const auto& rc) { return rc.first == c; });
  };
  std::unordered_map<char32_t, bool> covered_lookup;
  for (const auto& rc : ranked_chars) covered_lookup[rc.first] = is_covered(rc.first);

  const int floor = static_cast<int>(covered.size()) + 1 + 4;
  if (config.vocab_size < floor)
    throw ConfigError("tokenizer.vocab_size " + std::to_string(config.vocab_size) +
                      " is below the character floor of " + std::to_string(floor) + " (" +
                      std::to_string(covered.size()) + " covered characters, the word marker and 4 specials)");

  // Training fragments: words split at uncovered characters.
  std::map<std::u32string, double> fragment_counts;
  for (const auto& [w, c] : word_counts) {
    std::size_t start = 0;
    for (std::size_t i = 0; i <= w.size(); ++i) {
      if (i == w.size() || (i > 0 && !covered_lookup[w[i]])) {
        if (i > start) fragment_counts[w.substr(start, i - start)] += c;
        start = i + 1;
      }
    }
  }
  WordCounts fragments(fragment_counts.begin(), fragment_counts.end());

  // Seed vocabulary: characters, then the most frequent substrings by freq * length.
  Vocabulary vocab;
  double marker_count = 0;
  for (const auto& [w, c] : word_counts) marker_count += c;
  std::vector<double> seed_freq;
  vocab.pieces.push_back(std::u32string(1, kWordMarker));
  seed_freq.push_back(marker_count);
  for (const auto& [ch, c] : covered) {
    vocab.pieces.push_back(std::u32string(1, ch));
    seed_freq.push_back(c);
  }
  vocab.n_required = vocab.pieces.size();

  std::unordered_map<std::u32string, double> substrings;
  for (const auto& [w, c] : fragments)
    for (std::size_t i = 0; i < w.size(); ++i)
      for (std::size_t len = 2; len <= static_cast<std::size_t>(config.max_piece_length) && i + len <= w.size(); ++len)
        substrings[w.substr(i, len)] += c;
  std::vector<std::pair<std::u32string, double>> candidates(substrings.begin(), substrings.end());
  std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
    const double sa = a.second * static_cast<double>(a.first.size());
    const double sb = b.second * static_cast<double>(b.first.size());
    return sa != sb ? sa > sb : a.first < b.first;
  });
  const std::size_t seed_cap = static_cast<std::size_t>(config.seed_multiplier) * config.vocab_size;
  const std::vector<std::u32string> reserved{U"<unk>", U"<s>", U"</s>", U"<pad>"};
  for (const auto& [s, f] : candidates) {
    if (vocab.pieces.size() >= seed_cap) break;
    if (std::find(reserved.begin(), reserved.end(), s) != reserved.end()) continue;
    vocab.pieces.push_back(s);
    seed_freq.push_back(f);
  }
  const std::size_t target = static_cast<std::size_t>(config.vocab_size) - 4;
  if (vocab.pieces.size() < target)
    throw ConfigError("tokenizer.vocab_size " + std::to_string(config.vocab_size) +
                      " exceeds what the corpus supports (" + std::to_string(vocab.pieces.size() + 4) + ")");
  double seed_total = 0;
  for (double f : seed_freq) seed_total += f;
  for (double f : seed_freq) vocab.log_probs.push_back(std::log(f / seed_total));
  if (trace) {
    trace->seed_size = vocab.pieces.size();
    trace->covered_characters = covered.size();
    trace->em_log_likelihood.clear();
  }

  while (true) {
    std::vector<double> round;
    for (int it = 0; it < config.em_iterations; ++it) {
      auto step = unigram_em_step(vocab.pieces, vocab.log_probs, fragments);
      vocab.log_probs = std::move(step.log_probs);
      round.push_back(step.log_likelihood);
    }
    if (trace) trace->em_log_likelihood.push_back(std::move(round));
    if (vocab.pieces.size() <= target) break;

    // Viterbi usage statistics.
    const PieceTrie trie = build_trie(vocab.pieces);
    const std::size_t n = vocab.pieces.size();
    std::vector<double> freq(n, 0.0), inverted(n, 0.0);
    double vsum = 0;
    std::vector<char> seen(n, 0);
    for (const auto& [w, c] : fragments) {
      vsum += c;
      std::fill(seen.begin(), seen.end(), 0);
      for (int id : best_segmentation(w, trie, vocab.pieces, vocab.log_probs, -1, kNegInf)) {
        freq[id] += c;
        if (!seen[id]) {
          seen[id] = 1;
          inverted[id] += c;
        }
      }
    }
    double sum = 0;
    for (double f : freq) sum += f;
    const double logsum = std::log(sum);

    // Likelihood loss when a piece is removed and replaced by its best
    // alternative segmentation.
    struct Candidate {
      std::size_t id;
      double loss;
    };
    std::vector<Candidate> prunable;
    for (std::size_t i = vocab.n_required; i < n; ++i) {
      double loss = kNegInf;
      if (freq[i] > 0) {
        const auto alt = best_segmentation(vocab.pieces[i], trie, vocab.pieces, vocab.log_probs, -1, kNegInf,
                                           static_cast<int>(i));
        const double logprob_sp = std::log(freq[i]) - logsum;
        const double logsum_alt = std::log(sum + freq[i] * (static_cast<double>(alt.size()) - 1));
        double logprob_alt = 0;
        for (int a : alt) logprob_alt += std::log(freq[a] + freq[i]) - logsum_alt;
        loss = (inverted[i] / vsum) * (logprob_sp - logprob_alt);
      }
      prunable.push_back({i, loss});
    }
    std::sort(prunable.begin(), prunable.end(), [&](const Candidate& a, const Candidate& b) {
      if (a.loss != b.loss) return a.loss < b.loss;
      if (vocab.log_probs[a.id] != vocab.log_probs[b.id]) return vocab.log_probs[a.id] < vocab.log_probs[b.id];
      return vocab.pieces[a.id] < vocab.pieces[b.id];
    });
    const std::size_t quota = std::max<std::size_t>(
        1, static_cast<std::size_t>(config.prune_fraction * static_cast<double>(prunable.size())));
    const std::size_t remove = std::min(quota, n - target);
    std::vector<char> drop(n, 0);
    for (std::size_t k = 0; k < remove; ++k) drop[prunable[k].id] = 1;
    Vocabulary next;
    next.n_required = vocab.n_required;
    for (std::size_t i = 0; i < n; ++i)
      if (!drop[i]) {
        next.pieces.push_back(std::move(vocab.pieces[i]));
        next.log_probs.push_back(vocab.log_probs[i]);
      }
    vocab = std::move(next);
  }

  std::vector<std::size_t> order(vocab.pieces.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (vocab.log_probs[a] != vocab.log_probs[b]) return vocab.log_probs[a] > vocab.log_probs[b];
    return vocab.pieces[a] < vocab.pieces[b];
  });
  std::vector<TokenizerModel::Piece> pieces{{"<unk>", 0.0}, {"<s>", 0.0}, {"</s>", 0.0}, {"<pad>", 0.0}};
  for (std::size_t i : order) pieces.push_back({utf8::encode(vocab.pieces[i]), vocab.log_probs[i]});
  return TokenizerModel(TokenizerKind::subword_unigram, std::move(pieces), config.char_coverage);
}

}  // namespace multifit::tok
