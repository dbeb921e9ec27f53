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

#include <span>
#include <vector>

#include "multifit/autodiff.hpp"

// Differentiable tensor operations. Every op records its result on the tape
// of its inputs; results are checked for non-finite values.
//
// Reductions accumulate sequentially over the last axis so results do not
// depend on how the op is invoked.

namespace multifit {

enum class Activation { sigmoid, tanh, relu };

// [m x k] . [k x n] -> [m x n]
template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b);

// a . b^T: [m x k] . [n x k]^T -> [m x n]
template <typename Scalar>
Var<Scalar> matmul_nt(Var<Scalar> a, Var<Scalar> b);

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b);

template <typename Scalar>
Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b);

// Elementwise product.
template <typename Scalar>
Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b);

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> x, Scalar s);

// x + bias, bias broadcast along every axis but the last.
template <typename Scalar>
Var<Scalar> add_bias(Var<Scalar> x, Var<Scalar> bias);

// scale (*) x + shift with constant tensors of x's shape (dropout masks, zoneout).
template <typename Scalar>
Var<Scalar> affine_const(Var<Scalar> x, const Tensor<Scalar>& scale, const Tensor<Scalar>& shift);

template <typename Scalar>
Var<Scalar> mul_const(Var<Scalar> x, const Tensor<Scalar>& mask);

template <typename Scalar>
Var<Scalar> activation(Var<Scalar> x, Activation kind);

template <typename Scalar>
Var<Scalar> sigmoid(Var<Scalar> x) { return activation(x, Activation::sigmoid); }
template <typename Scalar>
Var<Scalar> tanh(Var<Scalar> x) { return activation(x, Activation::tanh); }
template <typename Scalar>
Var<Scalar> relu(Var<Scalar> x) { return activation(x, Activation::relu); }

template <typename Scalar>
Var<Scalar> reshape(Var<Scalar> x, Shape shape);

// Scalar sum / mean of all elements; result has shape [1].
template <typename Scalar>
Var<Scalar> sum(Var<Scalar> x);
template <typename Scalar>
Var<Scalar> mean(Var<Scalar> x);

// y[t] = sum_{i<width} x[t-i] . w[i] + bias, with x[t<0] = 0.
// x: [T x B x Din], w: [width x Din x Dout], bias: [Dout] -> [T x B x Dout].
template <typename Scalar>
Var<Scalar> causal_conv_over_time(Var<Scalar> x, Var<Scalar> w, Var<Scalar> bias);

// Forget-gate recurrence c[t] = f[t]*c[t-1] + (1-f[t])*z[t] for z, f: [T x B x H]
// and c0: [B x H]. Returns all cell states [T x B x H].
template <typename Scalar>
Var<Scalar> forget_mult(Var<Scalar> z, Var<Scalar> f, Var<Scalar> c0);

// x[t] of a [T x B x D] tensor -> [B x D].
template <typename Scalar>
Var<Scalar> time_step(Var<Scalar> x, Index t);

// Stacks T tensors of shape [B x D] -> [T x B x D].
template <typename Scalar>
Var<Scalar> stack_time(const std::vector<Var<Scalar>>& steps);

// Columns [start, start+width) of the last axis.
template <typename Scalar>
Var<Scalar> slice_last(Var<Scalar> x, Index start, Index width);

// Row gather: table [V x E], ids -> [ids.size() x E].
template <typename Scalar>
Var<Scalar> embedding(Var<Scalar> table, std::span<const int> ids);

// Mean over rows of -sum_k q_k log softmax(logits)_k with
// q = (1-eps) onehot(target) + eps/K. logits: [N x K]. Returns [1].
template <typename Scalar>
Var<Scalar> cross_entropy(Var<Scalar> logits, std::span<const int> targets, Scalar eps = 0);

// h: [T x B x H] -> [B x 3H] = [h[len-1] ; mean ; max] over valid steps.
template <typename Scalar>
Var<Scalar> concat_pool(Var<Scalar> h, std::span<const Index> lengths);

template <typename Scalar>
struct BatchNormResult {
  Var<Scalar> y;
  Vector<Scalar> batch_mean;
  Vector<Scalar> batch_var;  // biased
};

// Batch statistics over rows of x: [B x D].
template <typename Scalar>
BatchNormResult<Scalar> batch_norm_train(Var<Scalar> x, Var<Scalar> gamma, Var<Scalar> beta,
                                         Scalar eps);

// Frozen statistics.
template <typename Scalar>
Var<Scalar> batch_norm_eval(Var<Scalar> x, Var<Scalar> gamma, Var<Scalar> beta,
                            const Tensor<Scalar>& running_mean, const Tensor<Scalar>& running_var,
                            Scalar eps);

}  // namespace multifit
