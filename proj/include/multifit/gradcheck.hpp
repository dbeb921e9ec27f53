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

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "multifit/autodiff.hpp"

namespace multifit {

struct ParameterGradError {
  std::string name;
  double relative_error = 0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  double max_abs_error = 0;
  Index count = 0;
};

struct GradCheckReport {
  std::vector<ParameterGradError> entries;  // sorted by relative error, worst first

  double max_relative_error() const {
    return entries.empty() ? 0.0 : entries.front().relative_error;
  }
};

// Builds the scalar loss on a fresh tape from the given parameters.
using LossBuilder = std::function<Var<double>(Tape<double>&, const ParameterSet<double>&)>;

// Compares backward() against central differences (f(p+eps) - f(p-eps)) / 2eps
// for every trainable storage. Aliased tensors are checked once, so a tied
// weight is verified against the sum of all its uses. The error is
// |a - n| / max(|a|, |n|, abs_floor): gradients smaller than the floor
// (e.g. a bias feeding straight into batch-norm, exactly zero) are
// compared on an absolute scale instead of amplifying roundoff.
inline GradCheckReport check_gradients(ParameterSet<double>& params, const LossBuilder& build,
                                       double eps = 1e-5, double abs_floor = 1e-5) {
  if (!(eps > 0)) throw ContractError("check_gradients: eps must be positive");
  Gradients<double> analytic;
  {
    Tape<double> tape;
    analytic = tape.backward(build(tape, params));
  }
  const auto loss_at = [&]() {
    Tape<double> tape;
    return build(tape, params).value().item();
  };

  GradCheckReport report;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& e = params.entry(i);
    if (!e.trainable) continue;
    Vector<double> numeric(e.value.size());
    for (Index j = 0; j < e.value.size(); ++j) {
      const double saved = e.value[j];
      e.value[j] = saved + eps;
      const double up = loss_at();
      e.value[j] = saved - eps;
      const double down = loss_at();
      e.value[j] = saved;
      numeric[j] = (up - down) / (2 * eps);
    }
    const Vector<double> a = analytic.tensors.empty() ? Vector<double>::Zero(e.value.size())
                                                      : analytic[i].vec();
    const double denom = std::max({a.norm(), numeric.norm(), abs_floor});
    ParameterGradError err;
    err.name = e.name;
    err.count = e.value.size();
    err.max_abs_error = (a - numeric).cwiseAbs().maxCoeff();
    err.relative_error = denom > 0 ? (a - numeric).norm() / denom : 0.0;
    report.entries.push_back(err);
  }
  std::stable_sort(report.entries.begin(), report.entries.end(),
                   [](const auto& x, const auto& y) { return x.relative_error > y.relative_error; });
  return report;
}

}  // namespace multifit
