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
#include "multifit/metrics.hpp"

#include <ostream>

#include "json.hpp"

namespace multifit {

std::string metric_line(const MetricRecord& r) {
  nlohmann::ordered_json j;
  j["stage"] = r.stage;
  j["epoch"] = r.epoch;
  j["step"] = r.step;
  j["split"] = r.split;
  j["loss"] = r.loss;
  if (r.perplexity) j["perplexity"] = *r.perplexity;
  if (r.accuracy) j["accuracy"] = *r.accuracy;
  j["lr"] = r.lr;
  j["momentum"] = r.momentum;
  j["wallclock_ms"] = r.wallclock_ms;
  return j.dump();
}

std::string config_line(const RunConfig& cfg, const std::string& command) {
  nlohmann::ordered_json j;
  j["stage"] = "config";
  j["command"] = command;
  nlohmann::ordered_json c;
  for (const auto& key : RunConfig::keys()) c[key] = cfg.get(key);
  j["config"] = c;
  return j.dump();
}

void MetricsWriter::write_config(const RunConfig& cfg, const std::string& command) {
  *out_ << config_line(cfg, command) << '\n';
  out_->flush();
}

void MetricsWriter::write(const MetricRecord& r) {
  *out_ << metric_line(r) << '\n';
  out_->flush();
}

}  // namespace multifit
