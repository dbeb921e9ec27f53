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
#include <vector>

#include "multifit/config.hpp"
#include "multifit/network.hpp"

namespace multifit {

struct SpeedResult {
  CellKind cell = CellKind::qrnn;
  double median_ms = 0;
  std::vector<double> samples_ms;  // timed repetitions, warmup excluded
};

// Per-batch wall time of one LM training step (forward, backward, Adam
// update) on a random [bptt x batch] window at the given dimensions.
SpeedResult speed_benchmark(CellKind cell, const BenchConfig& dims, std::uint64_t seed = 1);

double median(std::vector<double> xs);

}  // namespace multifit
