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
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "multifit/config.hpp"
#include "multifit/optimizer.hpp"
#include "multifit/parameters.hpp"

namespace multifit {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Stored as `checkpoint.*` lines after the run config.
struct CheckpointMeta {
  std::string kind = "lm";  // "lm" or "classifier"
  std::string stage;
  int epoch = 0;
  Index step = 0;
  std::vector<std::string> class_names;
  std::string tokenizer_hash;
};

struct Checkpoint {
  RunConfig config;
  CheckpointMeta meta;
  ParameterSet<float> params;
  std::optional<Adam<float>::State> optimizer;
};

// Layout (little endian): "MFIT", u32 version, u64 length + config text,
// u32 tensor count, then per tensor u16 name length + name, u8 rank, u32 dims
// and float32 data; a trailing FNV-1a 64 checksum of all preceding bytes.
// Tied tensors are written once; aliases travel in the config text, and
// optimizer moments as "optim.m/<name>" and "optim.v/<name>".
std::string serialize_checkpoint(const Checkpoint& cp);
Checkpoint parse_checkpoint(std::string_view bytes, const std::string& source = "checkpoint");

void save_checkpoint(const std::string& path, const Checkpoint& cp);
Checkpoint load_checkpoint(const std::string& path);

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace multifit
