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
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "multifit/errors.hpp"
#include "multifit/tokenizer.hpp"
#include "multifit/utf8.hpp"

namespace multifit::tok {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const std::string kUnkSurface = "\xE2\x81\x87";  // U+2047 "⁇"

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

bool scores_tie(double a, double b) {
  if (a == b) return true;
  return std::abs(a - b) <= kScoreTieTolerance * std::max({1.0, std::abs(a), std::abs(b)});
}

std::string to_string(TokenizerKind kind) {
  return kind == TokenizerKind::word ? "word" : "subword-unigram";
}

TokenizerKind tokenizer_kind_from_string(std::string_view name) {
  if (name == "subword-unigram") return TokenizerKind::subword_unigram;
  if (name == "word") return TokenizerKind::word;
  throw DataError("unknown tokenizer kind '" + std::string(name) + "'");
}

void PieceTrie::insert(std::u32string_view piece, int id) {
  int node = 0;
  for (char32_t c : piece) {
    int next = child(node, c);
    if (next < 0) {
      next = static_cast<int>(nodes_.size());
      nodes_.emplace_back();
      auto& kids = nodes_[node].children;
      kids.insert(std::lower_bound(kids.begin(), kids.end(), std::make_pair(c, 0),
                                   [](const auto& a, const auto& b) { return a.first < b.first; }),
                  {c, next});
    }
    node = next;
  }
  nodes_[node].id = id;
}

int PieceTrie::child(int node, char32_t c) const {
  const auto& kids = nodes_[node].children;
  auto it = std::lower_bound(kids.begin(), kids.end(), std::make_pair(c, 0),
                             [](const auto& a, const auto& b) { return a.first < b.first; });
  return (it != kids.end() && it->first == c) ? it->second : -1;
}

std::vector<int> best_segmentation(std::u32string_view text, const PieceTrie& trie,
                                   std::span<const std::u32string> pieces, std::span<const double> log_probs,
                                   int unk_id, double unk_log_prob, int excluded) {
  struct Cell {
    double score = kNegInf;
    int count = 0;
    int prev = -1;
    int id = -1;
  };
  const std::size_t n = text.size();
  std::vector<Cell> cells(n + 1);
  cells[0].score = 0;
  cells[0].prev = 0;

  const auto path_to = [&](std::size_t end) {
    std::vector<int> ids;
    for (std::size_t pos = end; pos > 0; pos = static_cast<std::size_t>(cells[pos].prev))
      ids.push_back(cells[pos].id);
    std::reverse(ids.begin(), ids.end());
    return ids;
  };
  const auto lex_less = [&](const std::vector<int>& a, const std::vector<int>& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(),
                                        [&](int x, int y) { return pieces[x] < pieces[y]; });
  };
  const auto relax = [&](std::size_t from, std::size_t to, int id, double lp) {
    const double score = cells[from].score + lp;
    const int count = cells[from].count + 1;
    Cell& cur = cells[to];
    const bool tied = cur.prev >= 0 && scores_tie(score, cur.score);
    bool better = cur.prev < 0 || (!tied && score > cur.score) || (tied && count < cur.count);
    if (tied && count == cur.count) {
      auto candidate = path_to(from);
      candidate.push_back(id);
      better = lex_less(candidate, path_to(to));
    }
    if (better) cur = Cell{score, count, static_cast<int>(from), id};
  };

  for (std::size_t i = 0; i < n; ++i) {
    if (cells[i].prev < 0) continue;
    bool has_single = false;
    trie.for_each_prefix(text, i, [&](std::size_t len, int id) {
      if (id == excluded || log_probs[id] == kNegInf) return;
      if (len == 1) has_single = true;
      relax(i, i + len, id, log_probs[id]);
    });
    if (!has_single) relax(i, i + 1, unk_id, unk_log_prob);
  }
  return path_to(n);
}

TokenizerModel::TokenizerModel(TokenizerKind kind, std::vector<Piece> pieces, double char_coverage, int unk,
                               int bos, int eos, int pad)
    : kind_(kind), pieces_(std::move(pieces)), coverage_(char_coverage), unk_(unk), bos_(bos), eos_(eos), pad_(pad) {
  const int n = size();
  for (int id : {unk_, bos_, eos_, pad_})
    if (id < 0 || id >= n) throw DataError("special id " + std::to_string(id) + " outside vocabulary");
  if (unk_ == bos_ || unk_ == eos_ || unk_ == pad_ || bos_ == eos_ || bos_ == pad_ || eos_ == pad_)
    throw DataError("special ids must be distinct");
  if (!(coverage_ > 0 && coverage_ <= 1)) throw DataError("character coverage must lie in (0,1]");
  min_log_prob_ = 0;
  for (int id = 0; id < n; ++id) {
    const auto& p = pieces_[id];
    if (p.text.empty()) throw DataError("empty piece at id " + std::to_string(id));
    if (!index_.emplace(p.text, id).second) throw DataError("duplicate piece '" + p.text + "'");
    if (p.log_prob > 1e-12) throw DataError("positive log probability for piece '" + p.text + "'");
    chars_.push_back(utf8::decode(p.text));
    log_probs_.push_back(p.log_prob);
    if (!is_special(id)) {
      trie_.insert(chars_.back(), id);
      min_log_prob_ = std::min(min_log_prob_, p.log_prob);
    }
  }
}

const TokenizerModel::Piece& TokenizerModel::piece(int id) const {
  if (id < 0 || id >= size()) throw ContractError("piece id " + std::to_string(id) + " out of range");
  return pieces_[id];
}

int TokenizerModel::id_of(std::string_view text) const {
  auto it = index_.find(std::string(text));
  return it == index_.end() ? -1 : it->second;
}

double TokenizerModel::unk_log_prob() const { return min_log_prob_ - 10.0; }

Segmentation TokenizerModel::encode(std::string_view text) const {
  Segmentation seg;
  if (kind_ == TokenizerKind::word) {
    for (const auto& token : word_tokenize(text)) {
      auto it = index_.find(token);
      const int id = (it != index_.end() && !is_special(it->second)) ? it->second : unk_;
      seg.ids.push_back(id);
      seg.log_prob += id == unk_ ? unk_log_prob() : log_probs_[id];
    }
    return seg;
  }
  for (std::string_view word : utf8::split_whitespace(text)) {
    std::u32string chars(1, kWordMarker);
    chars += utf8::decode(word);
    for (int id : best_segmentation(chars, trie_, chars_, log_probs_, unk_, unk_log_prob())) {
      seg.ids.push_back(id);
      seg.log_prob += id == unk_ ? unk_log_prob() : log_probs_[id];
    }
  }
  return seg;
}

std::string TokenizerModel::decode(std::span<const int> ids) const {
  std::string out;
  if (kind_ == TokenizerKind::word) {
    for (int id : ids) {
      const auto& p = piece(id);
      if (is_special(id) && id != unk_) continue;
      if (!out.empty()) out += ' ';
      out += p.text;
    }
    return out;
  }
  std::u32string chars;
  for (int id : ids) {
    piece(id);
    if (id == unk_) {
      chars += utf8::decode(kUnkSurface);
    } else if (!is_special(id)) {
      chars += chars_[id];
    }
  }
  for (auto& c : chars)
    if (c == kWordMarker) c = U' ';
  if (!chars.empty() && chars.front() == U' ') chars.erase(chars.begin());
  return utf8::encode(chars);
}

void TokenizerModel::save(std::ostream& os) const {
  os << "#kind=" << to_string(kind_) << '\n'
     << "#coverage=" << format_double(coverage_) << '\n'
     << "#unk=" << unk_ << '\n'
     << "#bos=" << bos_ << '\n'
     << "#eos=" << eos_ << '\n'
     << "#pad=" << pad_ << '\n';
  for (const auto& p : pieces_) os << p.text << '\t' << format_double(p.log_prob) << '\n';
}

void TokenizerModel::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write tokenizer model '" + path + "'");
  save(os);
}

TokenizerModel TokenizerModel::load(std::istream& is) {
  std::string line;
  std::size_t line_no = 0;
  TokenizerKind kind = TokenizerKind::subword_unigram;
  double coverage = 1.0;
  int unk = kDefaultUnk, bos = kDefaultBos, eos = kDefaultEos, pad = kDefaultPad;
  bool saw_kind = false;
  std::vector<Piece> pieces;
  const auto fail = [&](const std::string& what) {
    throw DataError("tokenizer model line " + std::to_string(line_no) + ": " + what);
  };
  const auto parse_int = [&](std::string_view v) {
    int out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) fail("bad integer '" + std::string(v) + "'");
    return out;
  };
  const auto parse_double = [&](const std::string& v) {
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size()) fail("bad number '" + v + "'");
      return d;
    } catch (const std::logic_error&) {
      fail("bad number '" + v + "'");
    }
    return 0.0;
  };
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      if (line.empty()) continue;
      if (line[0] != '#' || !pieces.empty()) fail("expected '<piece>\\t<log_prob>'");
      const auto eq = line.find('=');
      if (eq == std::string::npos) fail("malformed header");
      const std::string key = line.substr(1, eq - 1), value = line.substr(eq + 1);
      if (key == "kind") {
        kind = tokenizer_kind_from_string(value);
        saw_kind = true;
      } else if (key == "coverage") {
        coverage = parse_double(value);
      } else if (key == "unk") {
        unk = parse_int(value);
      } else if (key == "bos") {
        bos = parse_int(value);
      } else if (key == "eos") {
        eos = parse_int(value);
      } else if (key == "pad") {
        pad = parse_int(value);
      } else {
        fail("unknown header '" + key + "'");
      }
      continue;
    }
    pieces.push_back(Piece{line.substr(0, tab), parse_double(line.substr(tab + 1))});
  }
  if (!saw_kind) throw DataError("tokenizer model: missing #kind header");
  if (pieces.empty()) throw DataError("tokenizer model: no pieces");
  return TokenizerModel(kind, std::move(pieces), coverage, unk, bos, eos, pad);
}

TokenizerModel TokenizerModel::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read tokenizer model '" + path + "'");
  return load(is);
}

std::string TokenizerModel::content_hash() const {
  std::ostringstream os;
  save(os);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : os.str()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------

std::vector<std::string> word_tokenize(std::string_view text) {
  std::vector<std::string> out;
  const auto is_punct = [](char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; };
  for (std::string_view chunk : utf8::split_whitespace(text)) {
    std::size_t lo = 0, hi = chunk.size();
    while (lo < hi && is_punct(chunk[lo])) out.emplace_back(1, chunk[lo++]);
    std::vector<std::string> trailing;
    while (hi > lo && is_punct(chunk[hi - 1])) trailing.emplace_back(1, chunk[--hi]);
    if (hi > lo) out.emplace_back(chunk.substr(lo, hi - lo));
    out.insert(out.end(), trailing.rbegin(), trailing.rend());
  }
  return out;
}

TokenizerModel train_word_model(std::span<const std::string> corpus_lines, int max_words) {
  if (max_words < 1) throw ConfigError("word vocabulary needs at least one word");
  std::unordered_map<std::string, long> counts;
  for (const auto& line : corpus_lines)
    for (auto& w : word_tokenize(line)) ++counts[w];
  std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (static_cast<int>(ranked.size()) > max_words) ranked.resize(max_words);
  const std::vector<std::string> specials{"<unk>", "<s>", "</s>", "<pad>"};
  ranked.erase(std::remove_if(ranked.begin(), ranked.end(),
                              [&](const auto& r) { return std::find(specials.begin(), specials.end(), r.first) != specials.end(); }),
               ranked.end());
  double total = 0;
  for (const auto& r : ranked) total += static_cast<double>(r.second);
  std::vector<TokenizerModel::Piece> pieces;
  for (const auto& s : specials) pieces.push_back({s, 0.0});
  for (const auto& [w, c] : ranked) pieces.push_back({w, std::log(static_cast<double>(c) / total)});
  return TokenizerModel(TokenizerKind::word, std::move(pieces), 1.0);
}

}  // namespace multifit::tok
