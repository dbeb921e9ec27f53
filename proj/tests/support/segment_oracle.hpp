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

// Exhaustive-enumeration oracles for unigram segmentation and EM. These
// enumerate every segmentation explicitly and share no code with the
// lattice implementation they check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "multifit/tokenizer.hpp"

namespace multifit::testing {

// Calls f(ids) for every segmentation of s into pieces.
inline void for_each_segmentation(const std::u32string& s, const std::vector<std::u32string>& pieces,
                                  const std::function<void(const std::vector<int>&)>& f) {
  std::vector<int> path;
  std::function<void(std::size_t)> rec = [&](std::size_t pos) {
    if (pos == s.size()) {
      f(path);
      return;
    }
    for (std::size_t id = 0; id < pieces.size(); ++id) {
      const auto& p = pieces[id];
      if (s.compare(pos, p.size(), p) == 0) {
        path.push_back(static_cast<int>(id));
        rec(pos + p.size());
        path.pop_back();
      }
    }
  };
  rec(0);
}

// Best segmentation by (max score summed left to right, fewest pieces,
// lexicographically smallest piece sequence).
inline std::vector<int> brute_force_segmentation(const std::u32string& s, const std::vector<std::u32string>& pieces,
                                                 const std::vector<double>& log_probs) {
  std::vector<int> best;
  double best_score = -INFINITY;
  bool found = false;
  for_each_segmentation(s, pieces, [&](const std::vector<int>& ids) {
    double score = 0;
    for (int id : ids) score += log_probs[id];
    const bool tied = found && std::abs(score - best_score) <=
                                   1e-12 * std::max({1.0, std::abs(score), std::abs(best_score)});
    bool better = !found || (!tied && score > best_score);
    if (tied) {
      if (ids.size() != best.size()) {
        better = ids.size() < best.size();
      } else {
        std::vector<std::u32string> a, b;
        for (int id : ids) a.push_back(pieces[id]);
        for (int id : best) b.push_back(pieces[id]);
        better = a < b;
      }
    }
    if (better) {
      best = ids;
      best_score = score;
      found = true;
    }
  });
  return best;
}

inline tok::EmStepResult brute_force_em_step(const std::vector<std::u32string>& pieces,
                                             const std::vector<double>& log_probs, const tok::WordCounts& words) {
  std::vector<double> counts(pieces.size(), 0.0);
  double ll = 0, n = 0;
  for (const auto& [w, c] : words) {
    std::vector<std::pair<std::vector<int>, double>> segs;
    double z = 0;
    for_each_segmentation(w, pieces, [&](const std::vector<int>& ids) {
      double p = 1;
      for (int id : ids) p *= std::exp(log_probs[id]);
      segs.emplace_back(ids, p);
      z += p;
    });
    for (const auto& [ids, p] : segs)
      for (int id : ids) counts[id] += c * p / z;
    ll += c * std::log(z);
    n += c;
  }
  double total = 0;
  for (double x : counts) total += x;
  tok::EmStepResult out;
  for (double x : counts) out.log_probs.push_back(std::log(x / total));
  out.log_likelihood = ll / n;
  return out;
}

}  // namespace multifit::testing
