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
#include "multifit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace multifit {
namespace {

template <typename S>
void require_rank(const Tensor<S>& t, std::size_t rank, const char* op) {
  if (t.rank() != rank)
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(t.shape()));
}

template <typename S>
void require_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
}

template <typename S>
using Arr = Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  require_rank(av, 2, "matmul");
  require_rank(bv, 2, "matmul");
  if (av.dim(1) != bv.dim(0))
    throw DimensionError("matmul: inner dimensions disagree for " + shape_string(av.shape()) +
                         " x " + shape_string(bv.shape()));
  const Index m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor<S> out({m, n});
  out.matrix(m, n).noalias() = av.matrix(m, k) * bv.matrix(k, n);
  return a.tape->record("matmul", std::move(out), {a, b}, [a, b, m, k, n](Tape<S>& t, int self) {
    const auto g = t.grad(self).matrix(m, n);
    if (t.requires_grad(a.id))
      t.grad(a.id).matrix(m, k).noalias() += g * t.value(b.id).matrix(k, n).transpose();
    if (t.requires_grad(b.id))
      t.grad(b.id).matrix(k, n).noalias() += t.value(a.id).matrix(m, k).transpose() * g;
  });
}

template <typename S>
Var<S> matmul_nt(Var<S> a, Var<S> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  require_rank(av, 2, "matmul_nt");
  require_rank(bv, 2, "matmul_nt");
  if (av.dim(1) != bv.dim(1))
    throw DimensionError("matmul_nt: inner dimensions disagree for " + shape_string(av.shape()) +
                         " x " + shape_string(bv.shape()) + "^T");
  const Index m = av.dim(0), k = av.dim(1), n = bv.dim(0);
  Tensor<S> out({m, n});
  out.matrix(m, n).noalias() = av.matrix(m, k) * bv.matrix(n, k).transpose();
  return a.tape->record("matmul_nt", std::move(out), {a, b}, [a, b, m, k, n](Tape<S>& t, int self) {
    const auto g = t.grad(self).matrix(m, n);
    if (t.requires_grad(a.id))
      t.grad(a.id).matrix(m, k).noalias() += g * t.value(b.id).matrix(n, k);
    if (t.requires_grad(b.id))
      t.grad(b.id).matrix(n, k).noalias() += g.transpose() * t.value(a.id).matrix(m, k);
  });
}

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor<S> out(a.shape(), a.value().vec() + b.value().vec());
  return a.tape->record("add", std::move(out), {a, b}, [a, b](Tape<S>& t, int self) {
    const auto& g = t.grad(self).vec();
    if (t.requires_grad(a.id)) t.grad(a.id).vec() += g;
    if (t.requires_grad(b.id)) t.grad(b.id).vec() += g;
  });
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor<S> out(a.shape(), a.value().vec() - b.value().vec());
  return a.tape->record("sub", std::move(out), {a, b}, [a, b](Tape<S>& t, int self) {
    const auto& g = t.grad(self).vec();
    if (t.requires_grad(a.id)) t.grad(a.id).vec() += g;
    if (t.requires_grad(b.id)) t.grad(b.id).vec() -= g;
  });
}

template <typename S>
Var<S> mul(Var<S> a, Var<S> b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor<S> out(a.shape(), a.value().vec().cwiseProduct(b.value().vec()));
  return a.tape->record("mul", std::move(out), {a, b}, [a, b](Tape<S>& t, int self) {
    const auto& g = t.grad(self).vec();
    if (t.requires_grad(a.id)) t.grad(a.id).vec() += g.cwiseProduct(t.value(b.id).vec());
    if (t.requires_grad(b.id)) t.grad(b.id).vec() += g.cwiseProduct(t.value(a.id).vec());
  });
}

template <typename S>
Var<S> scale(Var<S> x, S s) {
  Tensor<S> out(x.shape(), x.value().vec() * s);
  return x.tape->record("scale", std::move(out), {x}, [x, s](Tape<S>& t, int self) {
    t.grad(x.id).vec() += t.grad(self).vec() * s;
  });
}

template <typename S>
Var<S> add_bias(Var<S> x, Var<S> bias) {
  const auto& xv = x.value();
  const auto& bv = bias.value();
  require_rank(bv, 1, "add_bias");
  if (xv.rank() < 1 || xv.shape().back() != bv.dim(0))
    throw DimensionError("add_bias: bias " + shape_string(bv.shape()) + " does not match " +
                         shape_string(xv.shape()));
  Tensor<S> out = xv;
  out.as_rows().rowwise() += bv.vec().transpose();
  return x.tape->record("add_bias", std::move(out), {x, bias}, [x, bias](Tape<S>& t, int self) {
    const auto g = t.grad(self).as_rows();
    if (t.requires_grad(x.id)) t.grad(x.id).vec() += t.grad(self).vec();
    if (t.requires_grad(bias.id)) {
      auto& gb = t.grad(bias.id).vec();
      for (Index r = 0; r < g.rows(); ++r) gb += g.row(r).transpose();
    }
  });
}

template <typename S>
Var<S> affine_const(Var<S> x, const Tensor<S>& scale_t, const Tensor<S>& shift) {
  require_same_shape(x.value(), scale_t, "affine_const");
  require_same_shape(x.value(), shift, "affine_const");
  Tensor<S> out(x.shape(), x.value().vec().cwiseProduct(scale_t.vec()) + shift.vec());
  return x.tape->record("affine_const", std::move(out), {x}, [x, scale_t](Tape<S>& t, int self) {
    t.grad(x.id).vec() += t.grad(self).vec().cwiseProduct(scale_t.vec());
  });
}

template <typename S>
Var<S> mul_const(Var<S> x, const Tensor<S>& mask) {
  require_same_shape(x.value(), mask, "mul_const");
  Tensor<S> out(x.shape(), x.value().vec().cwiseProduct(mask.vec()));
  return x.tape->record("mul_const", std::move(out), {x}, [x, mask](Tape<S>& t, int self) {
    t.grad(x.id).vec() += t.grad(self).vec().cwiseProduct(mask.vec());
  });
}

template <typename S>
Var<S> activation(Var<S> x, Activation kind) {
  const auto in = x.value().vec().array();
  Tensor<S> out(x.shape());
  auto o = out.vec().array();
  switch (kind) {
    case Activation::sigmoid:
      o = S(1) / (S(1) + (-in).exp());
      break;
    case Activation::tanh:
      o = in.tanh();
      break;
    case Activation::relu:
      o = in.max(S(0));
      break;
  }
  static constexpr const char* names[] = {"sigmoid", "tanh", "relu"};
  return x.tape->record(names[static_cast<int>(kind)], std::move(out), {x},
                        [x, kind](Tape<S>& t, int self) {
                          const auto g = t.grad(self).vec().array();
                          const auto y = t.value(self).vec().array();
                          auto gx = t.grad(x.id).vec().array();
                          switch (kind) {
                            case Activation::sigmoid:
                              gx += g * y * (S(1) - y);
                              break;
                            case Activation::tanh:
                              gx += g * (S(1) - y * y);
                              break;
                            case Activation::relu:
                              gx += (y > S(0)).select(g, S(0));
                              break;
                          }
                        });
}

template <typename S>
Var<S> reshape(Var<S> x, Shape shape) {
  if (shape_size(shape) != x.value().size())
    throw DimensionError("reshape: cannot reshape " + shape_string(x.shape()) + " to " +
                         shape_string(shape));
  Tensor<S> out = x.value().reshaped(std::move(shape));
  return x.tape->record("reshape", std::move(out), {x}, [x](Tape<S>& t, int self) {
    t.grad(x.id).vec() += t.grad(self).vec();
  });
}

template <typename S>
Var<S> sum(Var<S> x) {
  const auto& v = x.value().vec();
  S acc = 0;
  for (Index i = 0; i < v.size(); ++i) acc += v[i];
  return x.tape->record("sum", Tensor<S>({1}, {acc}), {x}, [x](Tape<S>& t, int self) {
    t.grad(x.id).vec().array() += t.grad(self)[0];
  });
}

template <typename S>
Var<S> mean(Var<S> x) {
  return scale(sum(x), S(1) / static_cast<S>(x.value().size()));
}

template <typename S>
Var<S> causal_conv_over_time(Var<S> x, Var<S> w, Var<S> bias) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  const auto& bv = bias.value();
  require_rank(xv, 3, "causal_conv_over_time");
  require_rank(wv, 3, "causal_conv_over_time");
  require_rank(bv, 1, "causal_conv_over_time");
  const Index T = xv.dim(0), B = xv.dim(1), din = xv.dim(2);
  const Index width = wv.dim(0), dout = wv.dim(2);
  if (wv.dim(1) != din || bv.dim(0) != dout)
    throw DimensionError("causal_conv_over_time: input " + shape_string(xv.shape()) +
                         ", weight " + shape_string(wv.shape()) + ", bias " +
                         shape_string(bv.shape()) + " disagree");
  const auto X = xv.matrix(T * B, din);
  Tensor<S> out({T, B, dout});
  auto Y = out.matrix(T * B, dout);
  const auto tap = [&](Index i) {
    return typename Tensor<S>::ConstMatrixMap(wv.data() + i * din * dout, din, dout);
  };
  Y.noalias() = X * tap(0);
  for (Index i = 1; i < std::min(width, T); ++i)
    Y.bottomRows((T - i) * B).noalias() += X.topRows((T - i) * B) * tap(i);
  Y.rowwise() += bv.vec().transpose();

  return x.tape->record(
      "causal_conv_over_time", std::move(out), {x, w, bias},
      [x, w, bias, T, B, din, dout, width](Tape<S>& t, int self) {
        const auto G = t.grad(self).matrix(T * B, dout);
        const auto& wv = t.value(w.id);
        for (Index i = 0; i < std::min(width, T); ++i) {
          const Index rows = (T - i) * B;
          typename Tensor<S>::ConstMatrixMap Wi(wv.data() + i * din * dout, din, dout);
          if (t.requires_grad(x.id))
            t.grad(x.id).matrix(T * B, din).topRows(rows).noalias() +=
                G.bottomRows(rows) * Wi.transpose();
          if (t.requires_grad(w.id)) {
            typename Tensor<S>::MatrixMap gWi(t.grad(w.id).data() + i * din * dout, din, dout);
            gWi.noalias() +=
                t.value(x.id).matrix(T * B, din).topRows(rows).transpose() * G.bottomRows(rows);
          }
        }
        if (t.requires_grad(bias.id)) {
          auto& gb = t.grad(bias.id).vec();
          for (Index r = 0; r < G.rows(); ++r) gb += G.row(r).transpose();
        }
      });
}

template <typename S>
Var<S> forget_mult(Var<S> z, Var<S> f, Var<S> c0) {
  const auto& zv = z.value();
  const auto& fv = f.value();
  const auto& cv = c0.value();
  require_rank(zv, 3, "forget_mult");
  require_same_shape(zv, fv, "forget_mult");
  const Index T = zv.dim(0), B = zv.dim(1), H = zv.dim(2);
  if (cv.shape() != Shape{B, H})
    throw DimensionError("forget_mult: initial state " + shape_string(cv.shape()) +
                         " does not match " + shape_string(zv.shape()));
  Tensor<S> out({T, B, H});
  const auto Z = zv.matrix(T * B, H).array();
  const auto F = fv.matrix(T * B, H).array();
  auto C = out.matrix(T * B, H).array();
  Arr<S> c = cv.matrix(B, H).array();
  for (Index t = 0; t < T; ++t) {
    const auto ft = F.middleRows(t * B, B);
    c = ft * c + (S(1) - ft) * Z.middleRows(t * B, B);
    C.middleRows(t * B, B) = c;
  }
  return z.tape->record("forget_mult", std::move(out), {z, f, c0},
                        [z, f, c0, T, B, H](Tape<S>& t, int self) {
                          const auto G = t.grad(self).matrix(T * B, H).array();
                          const auto Z = t.value(z.id).matrix(T * B, H).array();
                          const auto F = t.value(f.id).matrix(T * B, H).array();
                          const auto C = t.value(self).matrix(T * B, H).array();
                          const auto C0 = t.value(c0.id).matrix(B, H).array();
                          const bool need_z = t.requires_grad(z.id);
                          const bool need_f = t.requires_grad(f.id);
                          Arr<S> carry = Arr<S>::Zero(B, H);
                          for (Index s = T - 1; s >= 0; --s) {
                            const Arr<S> dc = G.middleRows(s * B, B) + carry;
                            const auto ft = F.middleRows(s * B, B);
                            if (need_z)
                              t.grad(z.id).matrix(T * B, H).array().middleRows(s * B, B) +=
                                  dc * (S(1) - ft);
                            if (need_f) {
                              const Arr<S> prev = s > 0 ? Arr<S>(C.middleRows((s - 1) * B, B))
                                                        : Arr<S>(C0);
                              t.grad(f.id).matrix(T * B, H).array().middleRows(s * B, B) +=
                                  dc * (prev - Z.middleRows(s * B, B));
                            }
                            carry = dc * ft;
                          }
                          if (t.requires_grad(c0.id)) t.grad(c0.id).matrix(B, H).array() += carry;
                        });
}

template <typename S>
Var<S> time_step(Var<S> x, Index step) {
  const auto& xv = x.value();
  require_rank(xv, 3, "time_step");
  const Index T = xv.dim(0), B = xv.dim(1), D = xv.dim(2);
  if (step < 0 || step >= T) throw ContractError("time_step: index out of range");
  Tensor<S> out({B, D});
  out.matrix(B, D) = xv.matrix(T * B, D).middleRows(step * B, B);
  return x.tape->record("time_step", std::move(out), {x}, [x, step, T, B, D](Tape<S>& t, int self) {
    t.grad(x.id).matrix(T * B, D).middleRows(step * B, B) += t.grad(self).matrix(B, D);
  });
}

template <typename S>
Var<S> stack_time(const std::vector<Var<S>>& steps) {
  if (steps.empty()) throw ContractError("stack_time: no steps");
  const Shape step_shape = steps.front().shape();
  if (step_shape.size() != 2) throw DimensionError("stack_time: steps must be rank 2");
  const Index T = static_cast<Index>(steps.size()), B = step_shape[0], D = step_shape[1];
  Tensor<S> out({T, B, D});
  for (Index s = 0; s < T; ++s) {
    if (steps[s].shape() != step_shape) throw DimensionError("stack_time: ragged steps");
    out.matrix(T * B, D).middleRows(s * B, B) = steps[s].value().matrix(B, D);
  }
  return steps.front().tape->record("stack_time", std::move(out), steps,
                                    [steps, B, D, T](Tape<S>& t, int self) {
                                      const auto G = t.grad(self).matrix(T * B, D);
                                      for (Index s = 0; s < T; ++s)
                                        if (t.requires_grad(steps[s].id))
                                          t.grad(steps[s].id).matrix(B, D) += G.middleRows(s * B, B);
                                    });
}

template <typename S>
Var<S> slice_last(Var<S> x, Index start, Index width) {
  const auto& xv = x.value();
  if (xv.rank() < 1 || start < 0 || width < 1 || start + width > xv.shape().back())
    throw DimensionError("slice_last: [" + std::to_string(start) + ", " +
                         std::to_string(start + width) + ") outside " + shape_string(xv.shape()));
  const Index D = xv.shape().back(), N = xv.size() / D;
  Shape shape = xv.shape();
  shape.back() = width;
  Tensor<S> out(shape);
  out.matrix(N, width) = xv.matrix(N, D).middleCols(start, width);
  return x.tape->record("slice_last", std::move(out), {x}, [x, start, width, N, D](Tape<S>& t, int self) {
    t.grad(x.id).matrix(N, D).middleCols(start, width) += t.grad(self).matrix(N, width);
  });
}

template <typename S>
Var<S> embedding(Var<S> table, std::span<const int> ids) {
  const auto& tv = table.value();
  require_rank(tv, 2, "embedding");
  const Index V = tv.dim(0), E = tv.dim(1), N = static_cast<Index>(ids.size());
  if (N == 0) throw ContractError("embedding: no ids");
  Tensor<S> out({N, E});
  auto O = out.matrix(N, E);
  const auto W = tv.matrix(V, E);
  for (Index i = 0; i < N; ++i) {
    if (ids[i] < 0 || ids[i] >= V)
      throw ContractError("embedding: id " + std::to_string(ids[i]) + " outside vocabulary of " +
                          std::to_string(V));
    O.row(i) = W.row(ids[i]);
  }
  std::vector<int> saved(ids.begin(), ids.end());
  return table.tape->record("embedding", std::move(out), {table},
                            [table, saved = std::move(saved), V, E, N](Tape<S>& t, int self) {
                              const auto G = t.grad(self).matrix(N, E);
                              auto GW = t.grad(table.id).matrix(V, E);
                              for (Index i = 0; i < N; ++i) GW.row(saved[i]) += G.row(i);
                            });
}

template <typename S>
Var<S> cross_entropy(Var<S> logits, std::span<const int> targets, S eps) {
  const auto& lv = logits.value();
  require_rank(lv, 2, "cross_entropy");
  const Index N = lv.dim(0), K = lv.dim(1);
  if (static_cast<Index>(targets.size()) != N)
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(N) + " rows");
  if (!(eps >= 0 && eps < 1)) throw ContractError("cross_entropy: eps must lie in [0,1)");
  const auto L = lv.matrix(N, K);
  RowMatrix<S> probs(N, K);
  S total = 0;
  for (Index n = 0; n < N; ++n) {
    const int target = targets[n];
    if (target < 0 || target >= K)
      throw ContractError("cross_entropy: target " + std::to_string(target) + " outside [0," +
                          std::to_string(K) + ")");
    const S mx = L.row(n).maxCoeff();
    S z = 0, row_sum = 0;
    for (Index k = 0; k < K; ++k) {
      z += std::exp(L(n, k) - mx);
      row_sum += L(n, k);
    }
    const S lse = mx + std::log(z);
    for (Index k = 0; k < K; ++k) probs(n, k) = std::exp(L(n, k) - lse);
    const S expected = (S(1) - eps) * L(n, target) + eps / static_cast<S>(K) * row_sum;
    total += lse - expected;
  }
  std::vector<int> saved(targets.begin(), targets.end());
  return logits.tape->record(
      "cross_entropy", Tensor<S>({1}, {total / static_cast<S>(N)}), {logits},
      [logits, probs = std::move(probs), saved = std::move(saved), eps, N, K](Tape<S>& t, int self) {
        const S g = t.grad(self)[0] / static_cast<S>(N);
        auto GL = t.grad(logits.id).matrix(N, K);
        const S smooth = eps / static_cast<S>(K);
        for (Index n = 0; n < N; ++n) {
          for (Index k = 0; k < K; ++k) GL(n, k) += g * (probs(n, k) - smooth);
          GL(n, saved[n]) -= g * (S(1) - eps);
        }
      });
}

template <typename S>
Var<S> concat_pool(Var<S> h, std::span<const Index> lengths) {
  const auto& hv = h.value();
  require_rank(hv, 3, "concat_pool");
  const Index T = hv.dim(0), B = hv.dim(1), H = hv.dim(2);
  if (static_cast<Index>(lengths.size()) != B)
    throw DimensionError("concat_pool: " + std::to_string(lengths.size()) + " lengths for batch " +
                         std::to_string(B));
  const auto X = hv.matrix(T * B, H);
  Tensor<S> out({B, 3 * H});
  auto O = out.matrix(B, 3 * H);
  std::vector<Index> argmax(B * H);
  for (Index b = 0; b < B; ++b) {
    const Index len = lengths[b];
    if (len < 1) throw ContractError("concat_pool: zero-length example at batch index " + std::to_string(b));
    if (len > T) throw ContractError("concat_pool: length exceeds sequence length");
    for (Index j = 0; j < H; ++j) {
      S acc = 0;
      S best = X(b, j);
      Index arg = 0;
      for (Index s = 0; s < len; ++s) {
        const S v = X(s * B + b, j);
        acc += v;
        if (v > best) {
          best = v;
          arg = s;
        }
      }
      O(b, j) = X((len - 1) * B + b, j);
      O(b, H + j) = acc / static_cast<S>(len);
      O(b, 2 * H + j) = best;
      argmax[b * H + j] = arg;
    }
  }
  std::vector<Index> lens(lengths.begin(), lengths.end());
  return h.tape->record("concat_pool", std::move(out), {h},
                        [h, lens = std::move(lens), argmax = std::move(argmax), T, B, H](Tape<S>& t, int self) {
                          const auto G = t.grad(self).matrix(B, 3 * H);
                          auto GX = t.grad(h.id).matrix(T * B, H);
                          for (Index b = 0; b < B; ++b) {
                            const Index len = lens[b];
                            for (Index j = 0; j < H; ++j) {
                              GX((len - 1) * B + b, j) += G(b, j);
                              const S share = G(b, H + j) / static_cast<S>(len);
                              for (Index s = 0; s < len; ++s) GX(s * B + b, j) += share;
                              GX(argmax[b * H + j] * B + b, j) += G(b, 2 * H + j);
                            }
                          }
                        });
}

template <typename S>
BatchNormResult<S> batch_norm_train(Var<S> x, Var<S> gamma, Var<S> beta, S eps) {
  const auto& xv = x.value();
  require_rank(xv, 2, "batch_norm_train");
  const Index B = xv.dim(0), D = xv.dim(1);
  if (gamma.value().shape() != Shape{D} || beta.value().shape() != Shape{D})
    throw DimensionError("batch_norm_train: affine parameters do not match width " + std::to_string(D));
  if (B < 2) throw ContractError("batch_norm_train: batch statistics need at least 2 rows");
  const auto X = xv.matrix(B, D);
  Vector<S> mu = Vector<S>::Zero(D), var = Vector<S>::Zero(D);
  for (Index b = 0; b < B; ++b) mu += X.row(b).transpose();
  mu /= static_cast<S>(B);
  for (Index b = 0; b < B; ++b) var.array() += (X.row(b).transpose() - mu).array().square();
  var /= static_cast<S>(B);
  const Vector<S> inv_std = (var.array() + eps).rsqrt();
  RowMatrix<S> xhat = (X.rowwise() - mu.transpose()).array().rowwise() * inv_std.transpose().array();
  Tensor<S> out({B, D});
  out.matrix(B, D) = (xhat.array().rowwise() * gamma.value().vec().transpose().array()).rowwise() +
                     beta.value().vec().transpose().array();
  Var<S> y = x.tape->record(
      "batch_norm_train", std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std, B, D](Tape<S>& t, int self) {
        const auto G = t.grad(self).matrix(B, D);
        if (t.requires_grad(beta.id))
          for (Index b = 0; b < B; ++b) t.grad(beta.id).vec() += G.row(b).transpose();
        if (t.requires_grad(gamma.id))
          for (Index b = 0; b < B; ++b)
            t.grad(gamma.id).vec() += G.row(b).transpose().cwiseProduct(xhat.row(b).transpose());
        if (t.requires_grad(x.id)) {
          const RowMatrix<S> dxhat = G.array().rowwise() * t.value(gamma.id).vec().transpose().array();
          Vector<S> sum_d = Vector<S>::Zero(D), sum_dx = Vector<S>::Zero(D);
          for (Index b = 0; b < B; ++b) {
            sum_d += dxhat.row(b).transpose();
            sum_dx += dxhat.row(b).transpose().cwiseProduct(xhat.row(b).transpose());
          }
          const S inv_b = S(1) / static_cast<S>(B);
          auto GX = t.grad(x.id).matrix(B, D);
          for (Index b = 0; b < B; ++b)
            GX.row(b).array() += (inv_std.array() * inv_b *
                                  (static_cast<S>(B) * dxhat.row(b).transpose().array() - sum_d.array() -
                                   xhat.row(b).transpose().array() * sum_dx.array()))
                                     .transpose();
        }
      });
  return {y, std::move(mu), std::move(var)};
}

template <typename S>
Var<S> batch_norm_eval(Var<S> x, Var<S> gamma, Var<S> beta, const Tensor<S>& running_mean,
                       const Tensor<S>& running_var, S eps) {
  const auto& xv = x.value();
  require_rank(xv, 2, "batch_norm_eval");
  const Index B = xv.dim(0), D = xv.dim(1);
  if (running_mean.shape() != Shape{D} || running_var.shape() != Shape{D})
    throw DimensionError("batch_norm_eval: running statistics do not match width " + std::to_string(D));
  const Vector<S> inv_std = (running_var.vec().array() + eps).rsqrt();
  const RowMatrix<S> xhat = (xv.matrix(B, D).rowwise() - running_mean.vec().transpose()).array().rowwise() *
                            inv_std.transpose().array();
  Tensor<S> out({B, D});
  out.matrix(B, D) = (xhat.array().rowwise() * gamma.value().vec().transpose().array()).rowwise() +
                     beta.value().vec().transpose().array();
  return x.tape->record("batch_norm_eval", std::move(out), {x, gamma, beta},
                        [x, gamma, beta, xhat, inv_std, B, D](Tape<S>& t, int self) {
                          const auto G = t.grad(self).matrix(B, D);
                          for (Index b = 0; b < B; ++b) {
                            if (t.requires_grad(beta.id)) t.grad(beta.id).vec() += G.row(b).transpose();
                            if (t.requires_grad(gamma.id))
                              t.grad(gamma.id).vec() += G.row(b).transpose().cwiseProduct(xhat.row(b).transpose());
                          }
                          if (t.requires_grad(x.id))
                            t.grad(x.id).matrix(B, D).array() +=
                                G.array().rowwise() *
                                (t.value(gamma.id).vec().array() * inv_std.array()).transpose();
                        });
}

#define MULTIFIT_INSTANTIATE_OPS(S)                                                              \
  template Var<S> matmul(Var<S>, Var<S>);                                                        \
  template Var<S> matmul_nt(Var<S>, Var<S>);                                                     \
  template Var<S> add(Var<S>, Var<S>);                                                           \
  template Var<S> sub(Var<S>, Var<S>);                                                           \
  template Var<S> mul(Var<S>, Var<S>);                                                           \
  template Var<S> scale(Var<S>, S);                                                              \
  template Var<S> add_bias(Var<S>, Var<S>);                                                      \
  template Var<S> affine_const(Var<S>, const Tensor<S>&, const Tensor<S>&);                      \
  template Var<S> mul_const(Var<S>, const Tensor<S>&);                                           \
  template Var<S> activation(Var<S>, Activation);                                                \
  template Var<S> reshape(Var<S>, Shape);                                                        \
  template Var<S> sum(Var<S>);                                                                   \
  template Var<S> mean(Var<S>);                                                                  \
  template Var<S> causal_conv_over_time(Var<S>, Var<S>, Var<S>);                                 \
  template Var<S> forget_mult(Var<S>, Var<S>, Var<S>);                                           \
  template Var<S> time_step(Var<S>, Index);                                                      \
  template Var<S> stack_time(const std::vector<Var<S>>&);                                        \
  template Var<S> slice_last(Var<S>, Index, Index);                                              \
  template Var<S> embedding(Var<S>, std::span<const int>);                                       \
  template Var<S> cross_entropy(Var<S>, std::span<const int>, S);                                \
  template Var<S> concat_pool(Var<S>, std::span<const Index>);                                   \
  template BatchNormResult<S> batch_norm_train(Var<S>, Var<S>, Var<S>, S);                       \
  template Var<S> batch_norm_eval(Var<S>, Var<S>, Var<S>, const Tensor<S>&, const Tensor<S>&, S);

MULTIFIT_INSTANTIATE_OPS(float)
MULTIFIT_INSTANTIATE_OPS(double)

}  // namespace multifit
