// Copyright 2026 The lfmcw Authors
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

#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "lfm/gradcheck.hpp"
#include "lfm/graph.hpp"
#include "lfm/hvp.hpp"

using namespace lfm;
using namespace lfm::gradcheck;

TEST_CASE("square: forward and backward") {
  Graph g;
  Var x = g.parameter("x");
  g.set_output("y", x * x);
  const Tensor three = Tensor::scalar(3);
  Bindings b;
  b.bind("x", three);
  const Evaluation eval = forward(g, b);
  CHECK(eval.output("y").item() == doctest::Approx(9.0));
  const GradientMap grad = backward(eval, "y");
  CHECK(grad.at("x").item() == doctest::Approx(6.0));
}

TEST_CASE("softmax and cross-entropy at uniform logits") {
  Graph g;
  Var logits = g.parameter("logits");
  g.set_output("p", softmax(logits));
  g.set_output("ce", cross_entropy(logits, g.input("labels")));
  const Tensor z = Tensor::zeros({1, 3});
  const Tensor label = Tensor::from({1}, {0});
  Bindings b;
  b.bind("logits", z).bind("labels", label);
  const Evaluation eval = forward(g, b);
  for (Index i = 0; i < 3; ++i) CHECK(eval.output("p")[i] == doctest::Approx(1.0 / 3.0));
  CHECK(eval.output("ce").item() == doctest::Approx(std::log(3.0)));
  const GradientMap grad = backward(eval, "ce");
  CHECK(grad.at("logits")[0] == doctest::Approx(1.0 / 3.0 - 1.0));
  CHECK(grad.at("logits")[1] == doctest::Approx(1.0 / 3.0));
  CHECK(grad.at("logits")[2] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("every primitive matches central differences on three shapes") {
  std::map<std::string, int> shapes_per_op;
  for (const auto& c : primitive_cases(2026)) {
    CAPTURE(c.op);
    const GradCheck r = check_gradients(c.build, c.leaves);
    CHECK(r.worst_relative <= 1e-4);
    ++shapes_per_op[c.op];
  }
  for (const auto& [op, count] : shapes_per_op) {
    CAPTURE(op);
    CHECK(count >= 3);
  }
}

namespace {

Var two_layer_net(Graph& g) {
  Var h = relu(add_bias(matmul(g.input("x"), g.parameter("w1")), g.parameter("b1")));
  Var logits = add_bias(matmul(h, g.parameter("w2")), g.parameter("b2"));
  return cross_entropy(logits, g.input("y"));
}

Leaves two_layer_leaves(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Leaves l;
  l.params = {{"w1", random_tensor({4, 6}, rng, 0.7)},
              {"b1", random_tensor({6}, rng, 0.3)},
              {"w2", random_tensor({6, 3}, rng, 0.7)},
              {"b2", random_tensor({3}, rng, 0.3)}};
  l.inputs = {{"x", random_tensor({5, 4}, rng)}, {"y", Tensor::from({5}, {0, 2, 1, 1, 0})}};
  return l;
}

}  // namespace

TEST_CASE("random two-layer net: every partial within 1e-4 of central differences") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const GradCheck r = check_gradients(two_layer_net, two_layer_leaves(seed), 1e-5, seed, 1e-6);
    CHECK(r.worst_elementwise <= 1e-4);
  }
}

TEST_CASE("forward is bit-deterministic") {
  const Leaves l = two_layer_leaves(9);
  Graph g;
  g.set_output("loss", two_layer_net(g));
  Bindings b;
  b.bind(l.params).bind(l.inputs);
  const Evaluation a = forward(g, b);
  const Evaluation c = forward(g, b);
  CHECK(a.output("loss") == c.output("loss"));
  CHECK(backward(a, "loss") == backward(c, "loss"));
}

TEST_CASE("errors: shape mismatch, non-finite values, non-scalar backward") {
  Graph g;
  Var a = g.parameter("a");
  Var b = g.parameter("b");
  g.set_output("sum", a + b);
  g.set_output("log", softplus(a));
  const Tensor x = Tensor::zeros({2, 3});
  const Tensor y = Tensor::zeros({3, 2});
  Bindings bad;
  bad.bind("a", x).bind("b", y);
  CHECK_THROWS_AS(forward(g, bad, {"sum"}), ShapeError);

  const Tensor inf = Tensor::constant({2, 3}, std::numeric_limits<Scalar>::infinity());
  Bindings nonfinite;
  nonfinite.bind("a", inf).bind("b", x);
  CHECK_THROWS_AS(forward(g, nonfinite, {"sum"}), NonFiniteError);

  Bindings ok;
  ok.bind("a", x).bind("b", x);
  const Evaluation eval = forward(g, ok, {"sum"});
  CHECK_THROWS_AS(backward(eval, "sum"), ShapeError);
}

TEST_CASE("labels outside the class range are rejected") {
  Graph g;
  g.set_output("ce", cross_entropy(g.parameter("logits"), g.input("labels")));
  const Tensor z = Tensor::zeros({2, 3});
  const Tensor labels = Tensor::from({2}, {0, 3});
  Bindings b;
  b.bind("logits", z).bind("labels", labels);
  CHECK_THROWS_AS(forward(g, b), ValidationError);
}

TEST_CASE("unused parameters get zero gradients and requested keys are exact") {
  Graph g;
  Var a = g.parameter("a");
  g.parameter("unused");
  g.set_output("y", sum(a * a));
  const Tensor x = Tensor::from({2}, {1, 2});
  const Tensor u = Tensor::from({3}, {5, 5, 5});
  Bindings b;
  b.bind("a", x).bind("unused", u);
  const GradientMap grad = backward(forward(g, b), "y", {"a", "unused"});
  CHECK(grad.size() == 2);
  CHECK(grad.at("unused") == Tensor::zeros({3}));
  CHECK(grad.at("a") == Tensor::from({2}, {2, 4}));
}

// ---- Hessian-vector products ---------------------------------------------

TEST_CASE("hvp of a quadratic is exact") {
  std::mt19937_64 rng(5);
  const Index n = 6;
  Matrix m = Matrix::NullaryExpr(n, n, [&] { return std::normal_distribution<Scalar>()(rng); });
  const Matrix q = m * m.transpose() + Matrix::Identity(n, n);
  const Vector x = Vector::NullaryExpr(n, [&] { return std::normal_distribution<Scalar>()(rng); });
  for (int trial = 0; trial < 5; ++trial) {
    const Vector v = Vector::NullaryExpr(n, [&] { return std::normal_distribution<Scalar>()(rng); });
    const std::function<Vector(const Vector&)> grad = [&](const Vector& p) -> Vector { return q * p; };
    const Vector hv = hvp<Scalar>(grad, x, v);
    const Vector exact = q * v;
    CHECK((hv - exact).norm() / exact.norm() <= 1e-9);
  }
}

TEST_CASE("hvp on weight sets matches quadratic Q v through the graph") {
  // loss = 0.5 * x^T Q x expressed with graph primitives
  std::mt19937_64 rng(11);
  Tensor qt = random_tensor({4, 4}, rng);
  Matrix qm = qt.matrix(4, 4);
  qm = (qm * qm.transpose()).eval() + Matrix::Identity(4, 4);
  const Tensor q({4, 4}, qm.reshaped<Eigen::RowMajor>().array());
  Graph g;
  Var x = g.parameter("x");
  Var qx = matmul(reshape(x, {1, 4}), g.constant(q));
  g.set_output("loss", Scalar(0.5) * sum(qx * reshape(x, {1, 4})));
  const GradientFn grad = [&](const WeightSet& p) {
    Bindings b;
    b.bind(p);
    return backward(forward(g, b), "loss");
  };
  const WeightSet params{{"x", random_tensor({4}, rng)}};
  const GradientMap v{{"x", random_tensor({4}, rng)}};
  const GradientMap hv = hvp(grad, params, v);
  const Vector exact = qm * flatten(v);
  CHECK((flatten(hv) - exact).norm() / exact.norm() <= 1e-9);
}

TEST_CASE("hvp rejects a zero direction") {
  const std::function<Vector(const Vector&)> grad = [](const Vector& p) -> Vector { return p; };
  const Vector x = Vector::Ones(3);
  CHECK_THROWS_AS(hvp<Scalar>(grad, x, Vector::Constant(3, 1e-14)), ValidationError);
  const WeightSet params{{"x", Tensor::zeros({3})}};
  const GradientFn fn = [](const WeightSet& p) { return p; };
  CHECK_THROWS_AS(hvp(fn, params, zeros_like(params)), ValidationError);
}

TEST_CASE("hvp on a small MLP agrees with a dense Hessian built column by column") {
  const Leaves l = two_layer_leaves(21);
  // tanh keeps the loss smooth so the dense finite-difference Hessian is meaningful
  auto build = [](Graph& g) {
    Var h = tanh(add_bias(matmul(g.input("x"), g.parameter("w1")), g.parameter("b1")));
    return cross_entropy(add_bias(matmul(h, g.parameter("w2")), g.parameter("b2")), g.input("y"));
  };
  Graph g;
  g.set_output("loss", build(g));
  const GradientFn grad = [&](const WeightSet& p) {
    Bindings b;
    b.bind(p).bind(l.inputs);
    return backward(forward(g, b), "loss");
  };
  const Vector x0 = flatten(l.params);
  const Index n = x0.size();
  Matrix hessian(n, n);
  const Scalar h = 1e-5;
  for (Index j = 0; j < n; ++j) {
    Vector xp = x0, xm = x0;
    xp[j] += h;
    xm[j] -= h;
    hessian.col(j) = (flatten(grad(unflatten(xp, l.params))) - flatten(grad(unflatten(xm, l.params)))) / (2 * h);
  }
  std::mt19937_64 rng(3);
  const GradientMap v = unflatten(Vector::NullaryExpr(n, [&] { return std::normal_distribution<Scalar>()(rng); }),
                                  l.params);
  const Vector dense = hessian * flatten(v);
  const Vector fd = flatten(hvp(grad, l.params, v));
  CHECK((fd - dense).norm() / dense.norm() <= 1e-3);
}
