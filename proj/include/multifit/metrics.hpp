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
#include <string>

#include "multifit/config.hpp"
#include "multifit/training.hpp"

namespace multifit {

// One JSON object per line: stage, epoch, step, split, loss, perplexity (LM
// stages), accuracy (classifier stages), lr, momentum, wallclock_ms.
std::string metric_line(const MetricRecord& r);

// Echo of the effective configuration: {"stage":"config","command":...,"config":{key:value}}.
std::string config_line(const RunConfig& cfg, const std::string& command);

class MetricsWriter {
 public:
  explicit MetricsWriter(std::ostream& out) : out_(&out) {}

  void write_config(const RunConfig& cfg, const std::string& command);
  void write(const MetricRecord& r);
  MetricsSink sink() {
    return [this](const MetricRecord& r) { write(r); };
  }

 private:
  std::ostream* out_;
};

}  // namespace multifit
