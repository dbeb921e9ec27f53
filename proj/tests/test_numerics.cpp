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
#include "doctest.h"

#include <cmath>
#include <random>

#include "multifit/gradcheck.hpp"
#include "multifit/ops.hpp"
#include "multifit/optimizer.hpp"

using namespace multifit;

namespace {

std::mt19937_64 rng(7);

Tensord random_tensor(Shape shape, double lo = -1, double hi = 1) {
  return Tensord::uniform(std::move(shape), lo, hi, rng);
}

// Projects an op output onto a fixed random direction so the loss is linear
// in the output and central differences see only the op's own curvature.
Var<double> project(Var<double> out, const Tensord& direction) {
  return sum(mul_const(out, direction));
}

}  // namespace

TEST_CASE("matmul hand values") {
  Tape<double> tape;
  auto eye = tape.constant(Tensord({2, 2}, {1, 0, 0, 1}));
  auto m = tape.constant(Tensord({2, 2}, {1, 2, 3, 4}));
  auto r = matmul(eye, m);
  CHECK(r.value().vec() == m.value().vec());

  auto row = tape.constant(Tensord({1, 2}, {1, 2}));
  auto col = tape.constant(Tensord({2, 1}, {3, 4}));
  CHECK(matmul(row, col).value().item() == 11.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape<double> tape;
  auto a = tape.constant(Tensord({2, 3}));
  auto b = tape.constant(Tensord({2, 3}));
  try {
    matmul(a, b);
    FAIL("expected a dimension error");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3] x [2x3]") != std::string::npos);
  }
}

TEST_CASE("matmul gradients match central differences") {
  ParameterSet<double> p;
  p.add("a", random_tensor({3, 4}));
  p.add("b", random_tensor({4, 2}));
  const Tensord dir = random_tensor({3, 2});
  auto report = check_gradients(p, [&](Tape<double>& t, const ParameterSet<double>& ps) {
    return project(matmul(t.parameter(ps, "a"), t.parameter(ps, "b")), dir);
  });
  CHECK(report.entries.size() == 2);
  CHECK(report.max_relative_error() < 1e-8);
}

TEST_CASE("matmul_nt gradients match central differences") {
  ParameterSet<double> p;
  p.add("a", random_tensor({3, 4}));
  p.add("b", random_tensor({5, 4}));
  const Tensord dir = random_tensor({3, 5});
  auto report = check_gradients(p, [&](Tape<double>& t, const ParameterSet<double>& ps) {
    return project(matmul_nt(t.parameter(ps, "a"), t.parameter(ps, "b")), dir);
  });
  CHECK(report.max_relative_error() < 1e-8);
}

TEST_CASE("causal convolution") {
  SUBCASE("direct summation example") {
    Tape<double> tape;
    auto x = tape.constant(Tensord({3, 1, 1}, {1, 2, 3}));
    auto w = tape.constant(Tensord({2, 1, 1}, {1, 1}));
    auto b = tape.constant(Tensord({1}, {0}));
    auto y = causal_conv_over_time(x, w, b);
    CHECK(y.value().vec() == Eigen::Vector3d(1, 3, 5));
  }
  SUBCASE("width one is matmul plus bias, bitwise") {
    Tape<float> tape;
    std::mt19937_64 g(3);
    auto xv = Tensorf::uniform({5, 3, 4}, -1, 1, g);
    auto wv = Tensorf::uniform({1, 4, 6}, -1, 1, g);
    auto bv = Tensorf::uniform({6}, -1, 1, g);
    auto y = causal_conv_over_time(tape.constant(xv), tape.constant(wv), tape.constant(bv));
    auto ref = add_bias(matmul(tape.constant(xv.reshaped({15, 4})), tape.constant(wv.reshaped({4, 6}))),
                        tape.constant(bv));
    CHECK(y.value().vec() == ref.value().vec());
  }
  SUBCASE("output at t=0 ignores later inputs") {
    Tape<double> tape;
    auto xv = random_tensor({4, 2, 3});
    auto wv = random_tensor({3, 3, 2});
    auto bv = random_tensor({2});
    auto y1 = causal_conv_over_time(tape.constant(xv), tape.constant(wv), tape.constant(bv));
    xv[1 * 2 * 3 + 1] += 10.0;  // perturb x[1]
    auto y2 = causal_conv_over_time(tape.constant(xv), tape.constant(wv), tape.constant(bv));
    for (Index i = 0; i < 4; ++i) CHECK(y1.value()[i] == y2.value()[i]);
    CHECK(y1.value()[4] != y2.value()[4]);
  }
  SUBCASE("width longer than the sequence") {
    Tape<double> tape;
    auto y = causal_conv_over_time(tape.constant(Tensord({2, 1, 1}, {1, 2})),
                                   tape.constant(Tensord({4, 1, 1}, {1, 10, 100, 1000})),
                                   tape.constant(Tensord({1}, {0})));
    CHECK(y.value()[0] == 1.0);
    CHECK(y.value()[1] == 12.0);
  }
  SUBCASE("gradients") {
    ParameterSet<double> p;
    p.add("x", random_tensor({5, 2, 3}));
    p.add("w", random_tensor({3, 3, 4}));
    p.add("b", random_tensor({4}));
    const Tensord dir = random_tensor({5, 2, 4});
    auto report = check_gradients(p, [&](Tape<double>& t, const ParameterSet<double>& ps) {
      return project(causal_conv_over_time(t.parameter(ps, "x"), t.parameter(ps, "w"), t.parameter(ps, "b")),
                     dir);
    });
    CHECK(report.max_relative_error() < 1e-8);
  }
}

TEST_CASE("activations") {
  Tape<double> tape;
  ParameterSet<double> p;
  p.add("x", Tensord({1}, {0.0}));
  auto x = tape.parameter(p, "x");
  auto s = sigmoid(x);
  CHECK(s.value().item() == 0.5);
  CHECK(tanh(x).value().item() == 0.0);
  auto grads = tape.backward(sum(s));
  CHECK(grads["x"].item() == doctest::Approx(0.25).epsilon(1e-15));

  for (auto kind : {Activation::sigmoid, Activation::tanh}) {
    ParameterSet<double> q;
    q.add("x", random_tensor({3, 5}, -2, 2));
    const Tensord dir = random_tensor({3, 5});
    auto report = check_gradients(q, [&](Tape<double>& t, const ParameterSet<double>& ps) {
      return project(activation(t.parameter(ps, "x"), kind), dir);
    }, 1e-5);
    CHECK(report.max_relative_error() < 1e-8);
  }
  ParameterSet<double> r;
  r.add("x", Tensord({4}, {-1.5, -0.3, 0.4, 2.0}));
  auto report = check_gradients(r, [&](Tape<double>& t, const ParameterSet<double>& ps) {
    return project(relu(t.parameter(ps, "x")), Tensord({4}, {1, 2, 3, 4}));
  });
  CHECK(report.max_relative_error() < 1e-8);
}

TEST_CASE("backward") {
  SUBCASE("sum of squares") {
    ParameterSet<double> p;
    p.add("x", Tensord({2}, {1, 2}));
    Tape<double> tape;
    auto x = tape.parameter(p, "x");
    auto g = tape.backward(sum(mul(x, x)));
    CHECK(g["x"][0] == 2.0);
    CHECK(g["x"][1] == 4.0);
  }
  SUBCASE("fan-out sums both paths") {
    ParameterSet<double> p;
    p.add("w", Tensord({2}, {0.5, -1.5}));
    p.tie("w_alias", "w");
    const Tensord a({2}, {3, 4}), b({2}, {-2, 7});
    Tape<double> tape;
    auto loss = add(sum(mul_const(tape.parameter(p, "w"), a)), sum(mul_const(tape.parameter(p, "w_alias"), b)));
    auto g = tape.backward(loss);
    CHECK(g.size() == 1);
    CHECK(g["w"][0] == 1.0);
    CHECK(g["w_alias"][1] == 11.0);
  }
  SUBCASE("unreachable parameters get zero gradient") {
    ParameterSet<double> p;
    p.add("used", Tensord({2}, {1, 2}));
    p.add("unused", Tensord({3}, {1, 2, 3}));
    Tape<double> tape;
    auto g = tape.backward(sum(tape.parameter(p, "used")));
    CHECK(g["unused"].vec().isZero());
    CHECK(g["unused"].shape() == Shape{3});
  }
  SUBCASE("non-scalar loss is a contract error") {
    Tape<double> tape;
    auto x = tape.constant(Tensord({2}, {1, 2}));
    CHECK_THROWS_AS(tape.backward(x), ContractError);
  }
  SUBCASE("one backward per recording") {
    ParameterSet<double> p;
    p.add("x", Tensord({1}, {1}));
    Tape<double> tape;
    auto loss = sum(tape.parameter(p, "x"));
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), ContractError);
  }
  SUBCASE("inputs precede consumers") {
    Tape<double> tape;
    auto a = tape.constant(Tensord({1}, {1}));
    auto b = tanh(a);
    auto c = add(a, b);
    CHECK(a.id < b.id);
    CHECK(b.id < c.id);
  }
}

TEST_CASE("non-finite results abort with the op name") {
  Tape<float> tape;
  auto big = tape.constant(Tensorf({1}, {1e30f}));
  try {
    mul(big, big);
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("'mul'") != std::string::npos);
  }
}

TEST_CASE("check_gradients harness") {
  SUBCASE("linear regression toy") {
    ParameterSet<double> p;
    p.add("w", random_tensor({3, 1}));
    p.add("b", random_tensor({1}));
    const Tensord X = random_tensor({8, 3});
    const Tensord y = random_tensor({8, 1});
    auto report = check_gradients(p, [&](Tape<double>& t, const ParameterSet<double>& ps) {
      auto pred = add_bias(matmul(t.constant(X), t.parameter(ps, "w")), t.parameter(ps, "b"));
      auto r = sub(pred, t.constant(y));
      return mean(mul(r, r));
    }, 1e-5);
    CHECK(report.max_relative_error() < 1e-9);
  }
  SUBCASE("zero-parameter model") {
    ParameterSet<double> p;
    auto report = check_gradients(p, [](Tape<double>& t, const ParameterSet<double>&) {
      return sum(t.constant(Tensord({2}, {1, 2})));
    });
    CHECK(report.entries.empty());
    CHECK(report.max_relative_error() == 0.0);
  }
  SUBCASE("a wrong gradient is detected") {
    ParameterSet<double> p;
    p.add("x", random_tensor({4}));
    // affine_const backward scales by the scale tensor only; feeding it a
    // shift of x's own value makes the recorded gradient incomplete.
    auto report = check_gradients(p, [&](Tape<double>& t, const ParameterSet<double>& ps) {
      auto x = t.parameter(ps, "x");
      return sum(affine_const(x, Tensord::constant({4}, 1.0), ps["x"]));
    });
    CHECK(report.max_relative_error() > 0.1);
  }
}

TEST_CASE("remaining ops pass finite differences") {
  SUBCASE("forget_mult") {
    ParameterSet<double> p;
    p.add("z", random_tensor({4, 2, 3}));
    p.add("f", random_tensor({4, 2, 3}, 0.05, 0.95));
    p.add("c0", random_tensor({2, 3}));
    const Tensord dir = random_tensor({4, 2, 3});
    auto report = check_gradients(p, [&](Tape<double>& t, const ParameterSet<double>& ps) {
      return project(forget_mult(t.parameter(ps, "z"), t.parameter(ps, "f"), t.parameter(ps, "c0")), dir);
    });
    CHECK(report.max_relative_error() < 1e-8);
  }
  SUBCASE("slicing and stacking") {
    ParameterSet<double> p;
    p.add("x", random_tensor({3, 2, 6}));
    const Tensord dir = random_tensor({3, 2, 2});
    auto report = check_gradients(p, [&](Tape<double>& t, const ParameterSet<double>& ps) {
      auto x = t.parameter(ps, "x");
      auto s = slice_last(x, 2, 2);
      std::vector<Var<double>> steps;
      for (Index i = 2; i >= 0; --i) steps.push_back(time_step(s, i));
      return project(stack_time(steps), dir);
    });
    CHECK(report.max_relative_error() < 1e-8);
  }
  SUBCASE("embedding with repeated ids") {
    ParameterSet<double> p;
    p.add("table", random_tensor({5, 3}));
    const std::vector<int> ids{4, 1, 4, 0};
    const Tensord dir = random_tensor({4, 3});
    auto report = check_gradients(p, [&](Tape<double>& t, const ParameterSet<double>& ps) {
      return project(embedding(t.parameter(ps, "table"), std::span<const int>(ids)), dir);
    });
    CHECK(report.max_relative_error() < 1e-8);
    Tape<double> tape;
    const std::vector<int> bad{5};
    CHECK_THROWS_AS(embedding(tape.parameter(p, "table"), std::span<const int>(bad)), ContractError);
  }
  SUBCASE("label-smoothed cross entropy") {
    ParameterSet<double> p;
    p.add("logits", random_tensor({4, 3}, -2, 2));
    const std::vector<int> targets{0, 2, 1, 2};
    auto report = check_gradients(p, [&](Tape<double>& t, const ParameterSet<double>& ps) {
      return cross_entropy(t.parameter(ps, "logits"), std::span<const int>(targets), 0.1);
    }, 1e-5);
    CHECK(report.max_relative_error() < 1e-8);
  }
  SUBCASE("concat pool") {
    ParameterSet<double> p;
    p.add("h", random_tensor({5, 3, 2}));
    const std::vector<Index> lengths{5, 2, 1};
    const Tensord dir = random_tensor({3, 6});
    auto report = check_gradients(p, [&](Tape<double>& t, const ParameterSet<double>& ps) {
      return project(concat_pool(t.parameter(ps, "h"), std::span<const Index>(lengths)), dir);
    });
    CHECK(report.max_relative_error() < 1e-8);
  }
  SUBCASE("batch norm in both modes") {
    ParameterSet<double> p;
    p.add("x", random_tensor({6, 4}));
    p.add("gamma", random_tensor({4}, 0.5, 1.5));
    p.add("beta", random_tensor({4}));
    const Tensord dir = random_tensor({6, 4});
    auto train = check_gradients(p, [&](Tape<double>& t, const ParameterSet<double>& ps) {
      return project(batch_norm_train(t.parameter(ps, "x"), t.parameter(ps, "gamma"), t.parameter(ps, "beta"), 1e-5).y,
                     dir);
    }, 1e-5);
    CHECK(train.max_relative_error() < 1e-8);
    const Tensord rm = random_tensor({4}), rv = random_tensor({4}, 0.5, 2.0);
    auto eval = check_gradients(p, [&](Tape<double>& t, const ParameterSet<double>& ps) {
      return project(batch_norm_eval(t.parameter(ps, "x"), t.parameter(ps, "gamma"), t.parameter(ps, "beta"), rm, rv,
                                     1e-5),
                     dir);
    });
    CHECK(eval.max_relative_error() < 1e-8);
  }
}

TEST_CASE("single and double precision forward agree") {
  std::mt19937_64 g(11);
  const auto x = Tensord::uniform({6, 2, 5}, -1, 1, g);
  const auto w = Tensord::uniform({2, 5, 4}, -0.5, 0.5, g);
  const auto b = Tensord::uniform({4}, -0.1, 0.1, g);
  const auto run = [&]<typename S>(S) {
    Tape<S> t;
    auto y = tanh(causal_conv_over_time(t.constant(x.cast<S>()), t.constant(w.cast<S>()), t.constant(b.cast<S>())));
    return y.value().template cast<double>();
  };
  const auto yd = run(0.0);
  const auto yf = run(0.0f);
  CHECK((yd.vec() - yf.vec()).norm() / yd.vec().norm() < 1e-4);
}

TEST_CASE("adam step") {
  SUBCASE("zero gradient and no decay leaves parameters unchanged") {
    ParameterSet<double> p;
    p.add("w", Tensord({3}, {1, -2, 3}));
    Gradients<double> g{&p, {Tensord::zeros({3})}};
    Adam<double> adam;
    const std::vector<double> lrs{0.1};
    adam.step(p, g, lrs, 0.9, 0.0);
    CHECK(p["w"].vec() == Eigen::Vector3d(1, -2, 3));
  }
  SUBCASE("pure decoupled decay") {
    ParameterSet<double> p;
    p.add("w", Tensord({1}, {1.0}));
    Gradients<double> g{&p, {Tensord::zeros({1})}};
    Adam<double> adam;
    const std::vector<double> lrs{0.1};
    adam.step(p, g, lrs, 0.9, 0.01);
    CHECK(p["w"].item() == doctest::Approx(0.999).epsilon(1e-15));
  }
  SUBCASE("first step matches the closed form") {
    // From zeroed moments the bias-corrected moments are g and g^2, so the
    // step is lr * g / (|g| + eps) after decay.
    const double lr = 0.05, wd = 0.01, beta1 = 0.93, eps = 1e-8;
    ParameterSet<double> p;
    p.add("w", Tensord({3}, {0.5, -1.0, 2.0}));
    const Tensord grad({3}, {0.3, -4.0, 1e-3});
    Gradients<double> g{&p, {grad}};
    Adam<double> adam(AdamConfig{0.99, eps});
    const std::vector<double> lrs{lr};
    adam.step(p, g, lrs, beta1, wd);
    const double w0[] = {0.5, -1.0, 2.0};
    for (int i = 0; i < 3; ++i) {
      const double decayed = w0[i] - lr * wd * w0[i];
      const double expected = decayed - lr * grad[i] / (std::abs(grad[i]) + eps);
      CHECK(p["w"][i] == doctest::Approx(expected).epsilon(1e-12));
    }
    CHECK(adam.state().step == 1);
  }
  SUBCASE("shape mismatch") {
    ParameterSet<double> p;
    p.add("w", Tensord({3}));
    Gradients<double> g{&p, {Tensord::zeros({2})}};
    Adam<double> adam;
    const std::vector<double> lrs{0.1};
    CHECK_THROWS_AS(adam.step(p, g, lrs, 0.9, 0.0), ContractError);
  }
  SUBCASE("non-trainable entries are left alone") {
    ParameterSet<double> p;
    p.add("w", Tensord({1}, {1.0}), 0, false);
    Gradients<double> g{&p, {Tensord({1}, {5.0})}};
    Adam<double> adam;
    const std::vector<double> lrs{0.1};
    adam.step(p, g, lrs, 0.9, 0.01);
    CHECK(p["w"].item() == 1.0);
  }
}

TEST_CASE("global norm clipping") {
  ParameterSet<double> p;
  p.add("a", Tensord({2}));
  Gradients<double> g{&p, {Tensord({2}, {3, 4})}};
  CHECK(g.clip_global_norm(0.25) == doctest::Approx(5.0));
  CHECK(g.global_norm() == doctest::Approx(0.25));
}

TEST_CASE("parameter sets copy deeply and keep ties") {
  ParameterSet<float> p;
  p.add("emb", Tensorf({2}, {1, 2}));
  p.tie("dec", "emb");
  ParameterSet<float> q = p;
  q["dec"][0] = 9;
  CHECK(q["emb"][0] == 9);
  CHECK(p["emb"][0] == 1);
  CHECK(q.size() == 1);
  CHECK_THROWS_AS(p.add("emb", Tensorf({1})), ContractError);
}
