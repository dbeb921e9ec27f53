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
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "multifit/parameters.hpp"
#include "multifit/tensor.hpp"

namespace multifit {

template <typename Scalar>
class Tape;

// Handle to a node on a tape. Cheap to copy; only valid while its tape lives.
template <typename Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  int id = -1;

  const Tensor<Scalar>& value() const { return tape->value(id); }
  const Shape& shape() const { return value().shape(); }
  Index dim(std::size_t axis) const { return value().dim(axis); }
};

// Gradients aligned with the entries of a ParameterSet.
template <typename Scalar>
struct Gradients {
  const ParameterSet<Scalar>* params = nullptr;
  std::vector<Tensor<Scalar>> tensors;

  std::size_t size() const { return tensors.size(); }
  Tensor<Scalar>& operator[](std::size_t i) { return tensors.at(i); }
  const Tensor<Scalar>& operator[](std::size_t i) const { return tensors.at(i); }
  const Tensor<Scalar>& operator[](std::string_view name) const {
    return tensors.at(params->index_of(name));
  }

  Scalar global_norm() const {
    Scalar sq = 0;
    for (const auto& g : tensors) sq += g.vec().squaredNorm();
    return std::sqrt(sq);
  }

  // Rescales so the global L2 norm is at most max_norm; returns the norm before clipping.
  Scalar clip_global_norm(Scalar max_norm) {
    const Scalar norm = global_norm();
    if (max_norm > 0 && norm > max_norm) {
      const Scalar s = max_norm / norm;
      for (auto& g : tensors) g.vec() *= s;
    }
    return norm;
  }
};

// Linear record of a forward computation. Node ids are assigned in creation
// order, so every input precedes its consumer and reverse id order is a valid
// backward schedule. A tape supports exactly one backward pass.
template <typename Scalar>
class Tape {
 public:
  using TensorT = Tensor<Scalar>;
  using BackwardFn = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> constant(TensorT value) {
    Node n;
    n.op = "constant";
    n.value = std::move(value);
    return push(std::move(n));
  }

  // Leaf reading a parameter in place. All parameters on one tape must come
  // from the same set; aliases resolve to the shared storage index.
  Var<Scalar> parameter(const ParameterSet<Scalar>& params, std::string_view name) {
    if (params_ && params_ != &params)
      throw ContractError("tape already bound to a different parameter set");
    params_ = &params;
    const std::size_t idx = params.index_of(name);
    Node n;
    n.op = "parameter";
    n.ref = &params.entry(idx).value;
    n.param_index = static_cast<int>(idx);
    n.requires_grad = params.entry(idx).trainable;
    return push(std::move(n));
  }

  // Appends an op result. The node requires a gradient iff any input does.
  Var<Scalar> record(const char* op, TensorT value, std::initializer_list<Var<Scalar>> inputs,
                     BackwardFn backward) {
    return record(op, std::move(value), std::vector<Var<Scalar>>(inputs), std::move(backward));
  }

  Var<Scalar> record(const char* op, TensorT value, const std::vector<Var<Scalar>>& inputs,
                     BackwardFn backward) {
    if (!value.all_finite())
      throw NumericError(std::string("non-finite value produced by op '") + op + "'");
    Node n;
    n.op = op;
    n.value = std::move(value);
    for (const auto& in : inputs) {
      if (in.tape != this) throw ContractError(std::string("op '") + op + "' mixes tapes");
      if (in.id < 0 || in.id >= static_cast<int>(nodes_.size()))
        throw ContractError(std::string("op '") + op + "' references an unknown node");
      n.requires_grad = n.requires_grad || nodes_[in.id].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(backward);
    return push(std::move(n));
  }

  const TensorT& value(int id) const {
    const Node& n = nodes_.at(id);
    return n.ref ? *n.ref : n.value;
  }

  bool requires_grad(int id) const { return nodes_.at(id).requires_grad; }

  // Gradient accumulator for a node, zero-initialized on first access.
  TensorT& grad(int id) {
    Node& n = nodes_.at(id);
    if (n.grad.empty()) n.grad = TensorT::zeros(value(id).shape());
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }
  const std::string& op_name(int id) const { return nodes_.at(id).op; }

  Gradients<Scalar> backward(Var<Scalar> loss) {
    if (loss.tape != this) throw ContractError("backward: loss recorded on another tape");
    if (value(loss.id).size() != 1)
      throw ContractError("backward: loss must be a scalar, got shape " +
                          shape_string(value(loss.id).shape()));
    if (backward_done_) throw ContractError("backward: tape already consumed");
    backward_done_ = true;

    Gradients<Scalar> out;
    out.params = params_;
    if (params_)
      for (const auto& e : *params_) out.tensors.push_back(TensorT::zeros(e.value.shape()));

    grad(loss.id).vec().setOnes();
    for (int id = loss.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.grad.empty() || !n.requires_grad) continue;
      if (n.backward) n.backward(*this, id);
      if (n.param_index >= 0) out.tensors[n.param_index].vec() += n.grad.vec();
    }
    return out;
  }

 private:
  struct Node {
    std::string op;
    TensorT value;
    const TensorT* ref = nullptr;
    TensorT grad;
    BackwardFn backward;
    int param_index = -1;
    bool requires_grad = false;
  };

  Var<Scalar> push(Node n) {
    nodes_.push_back(std::move(n));
    return Var<Scalar>{this, static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
  const ParameterSet<Scalar>* params_ = nullptr;
  bool backward_done_ = false;
};

}  // namespace multifit
