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
#include "multifit/speed.hpp"

#include <algorithm>
#include <chrono>
#include <random>

#include "multifit/errors.hpp"
#include "multifit/optimizer.hpp"

namespace multifit {

double median(std::vector<double> xs) {
  if (xs.empty()) throw ContractError("median of an empty sample");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : (xs[n / 2 - 1] + xs[n / 2]) / 2;
}

SpeedResult speed_benchmark(CellKind cell, const BenchConfig& dims, std::uint64_t seed) {
  if (dims.reps < 5) throw ConfigError("speed benchmark needs at least 5 repetitions");
  ModelConfig cfg;
  cfg.vocab_size = dims.vocab;
  cfg.emb_dim = dims.emb;
  cfg.hidden_dim = dims.hidden;
  cfg.n_layers = dims.layers;
  cfg.cell = cell;
  auto params = build_language_model<float>(cfg, seed);

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> tok(0, dims.vocab - 1);
  const Index n = dims.bptt * dims.batch;
  std::vector<int> input(static_cast<std::size_t>(n)), target(static_cast<std::size_t>(n));
  for (auto& t : input) t = tok(rng);
  for (auto& t : target) t = tok(rng);

  Adam<float> adam;
  const std::vector<double> lrs(params.size(), 1e-4);
  RecurrentState<float> state;
  auto step = [&]() {
    Tape<float> tape;
    auto out = lm_forward(tape, params, cfg, TokenBatch{input, dims.bptt, dims.batch}, state, Mode::train);
    auto grads = tape.backward(lm_loss(out.logits, std::span<const int>(target)));
    adam.step(params, grads, lrs, 0.9, 0.01);
    state = std::move(out.state);
  };

  SpeedResult r;
  r.cell = cell;
  for (int i = 0; i < dims.warmup; ++i) step();
  for (int i = 0; i < dims.reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    step();
    r.samples_ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  r.median_ms = median(r.samples_ms);
  return r;
}

}  // namespace multifit
