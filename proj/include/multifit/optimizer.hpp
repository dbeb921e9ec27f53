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

#include <cmath>
#include <span>
#include <vector>

#include "multifit/autodiff.hpp"
#include "multifit/parameters.hpp"

namespace multifit {

struct AdamConfig {
  double beta2 = 0.99;
  double eps = 1e-8;
};

// Adam with decoupled weight decay. beta1 is supplied on every step so a
// schedule can cycle momentum; the first-moment bias correction uses the
// running product of the betas actually applied.
template <typename Scalar>
class Adam {
 public:
  struct State {
    std::vector<Tensor<Scalar>> m;
    std::vector<Tensor<Scalar>> v;
    long step = 0;
    double beta1_product = 1.0;
  };

  explicit Adam(AdamConfig config = {}) : config_(config) {}

  // lrs holds one learning rate per parameter entry (see lrs_for_groups).
  void step(ParameterSet<Scalar>& params, const Gradients<Scalar>& grads, std::span<const double> lrs,
            double beta1, double weight_decay) {
    if (grads.size() != params.size() || lrs.size() != params.size())
      throw ContractError("adam: gradients/learning rates do not cover the parameter set");
    if (!(beta1 >= 0 && beta1 < 1)) throw ContractError("adam: beta1 must lie in [0,1)");
    init(params);
    state_.step += 1;
    state_.beta1_product *= beta1;
    const Scalar bc1 = static_cast<Scalar>(1.0 - state_.beta1_product);
    const Scalar bc2 = static_cast<Scalar>(1.0 - std::pow(config_.beta2, state_.step));
    const Scalar b1 = static_cast<Scalar>(beta1), b2 = static_cast<Scalar>(config_.beta2);
    const Scalar eps = static_cast<Scalar>(config_.eps);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& e = params.entry(i);
      if (!e.trainable) continue;
      const auto& g = grads[i];
      if (g.shape() != e.value.shape())
        throw ContractError("adam: gradient shape " + shape_string(g.shape()) + " does not match '" +
                            e.name + "' " + shape_string(e.value.shape()));
      if (lrs[i] < 0) throw ContractError("adam: negative learning rate");
      const Scalar lr = static_cast<Scalar>(lrs[i]);
      auto p = e.value.vec().array();
      auto m = state_.m[i].vec().array();
      auto v = state_.v[i].vec().array();
      p -= lr * static_cast<Scalar>(weight_decay) * p;
      m = b1 * m + (Scalar(1) - b1) * g.vec().array();
      v = b2 * v + (Scalar(1) - b2) * g.vec().array().square();
      p -= lr * (m / bc1) / ((v / bc2).sqrt() + eps);
    }
  }

  const State& state() const { return state_; }
  State& state() { return state_; }
  const AdamConfig& config() const { return config_; }

 private:
  void init(const ParameterSet<Scalar>& params) {
    if (state_.m.size() == params.size()) {
      for (std::size_t i = 0; i < params.size(); ++i)
        if (state_.m[i].shape() != params.entry(i).value.shape() ||
            state_.v[i].shape() != params.entry(i).value.shape())
          throw ContractError("adam: accumulator shape mismatch for '" + params.entry(i).name + "'");
      return;
    }
    if (!state_.m.empty()) throw ContractError("adam: optimizer state belongs to another parameter set");
    for (const auto& e : params) {
      state_.m.push_back(Tensor<Scalar>::zeros(e.value.shape()));
      state_.v.push_back(Tensor<Scalar>::zeros(e.value.shape()));
    }
  }

  AdamConfig config_;
  State state_;
};

// Expands per-group learning rates into one rate per parameter entry.
template <typename Scalar>
std::vector<double> lrs_for_groups(const ParameterSet<Scalar>& params, std::span<const double> group_lrs) {
  std::vector<double> out;
  out.reserve(params.size());
  for (const auto& e : params) {
    if (e.group < 0 || static_cast<std::size_t>(e.group) >= group_lrs.size())
      throw ContractError("parameter '" + e.name + "' has group " + std::to_string(e.group) +
                          " but only " + std::to_string(group_lrs.size()) + " rates were given");
    out.push_back(group_lrs[e.group]);
  }
  return out;
}

}  // namespace multifit
