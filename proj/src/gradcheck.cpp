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

#include "lfm/gradcheck.hpp"

namespace lfm::gradcheck {
namespace {

Tensor labels_for(Index n, Index classes, std::mt19937_64& rng) {
  std::uniform_int_distribution<Index> pick(0, classes - 1);
  Tensor t({n});
  for (Index i = 0; i < n; ++i) t[i] = Scalar(pick(rng));
  return t;
}

}  // namespace

std::vector<PrimitiveCase> primitive_cases(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<PrimitiveCase> cases;
  auto add = [&](std::string op, Builder b, TensorMap params, TensorMap inputs = {}) {
    cases.push_back({std::move(op), std::move(b), Leaves{std::move(params), std::move(inputs)}});
  };

  for (auto [n, k, m] : {std::tuple<Index, Index, Index>{2, 3, 4}, {5, 1, 3}, {4, 6, 2}}) {
    add("matmul", [](Graph& g) { return matmul(g.parameter("a"), g.parameter("b")); },
        {{"a", random_tensor({n, k}, rng)}, {"b", random_tensor({k, m}, rng)}});
    add("add_bias", [](Graph& g) { return add_bias(g.parameter("x"), g.parameter("b")); },
        {{"x", random_tensor({n, k, m}, rng)}, {"b", random_tensor({m}, rng)}});
    add("add", [](Graph& g) { return g.parameter("a") + g.parameter("b"); },
        {{"a", random_tensor({n, m}, rng)}, {"b", random_tensor({n, m}, rng)}});
    add("mul", [](Graph& g) { return g.parameter("a") * g.parameter("b"); },
        {{"a", random_tensor({n, k}, rng)}, {"b", random_tensor({n, k}, rng)}});
    add("scale", [](Graph& g) { return Scalar(-1.7) * g.parameter("x"); }, {{"x", random_tensor({n, m, k}, rng)}});
    add("relu", [](Graph& g) { return relu(g.parameter("x")); }, {{"x", random_away_from_zero({n, k, m}, rng)}});
    add("tanh", [](Graph& g) { return tanh(g.parameter("x")); }, {{"x", random_tensor({n, m}, rng)}});
    add("sigmoid", [](Graph& g) { return sigmoid(g.parameter("x")); }, {{"x", random_tensor({n, m}, rng, 2)}});
    add("softplus", [](Graph& g) { return softplus(g.parameter("x")); }, {{"x", random_tensor({k, m}, rng, 3)}});
    add("softmax", [](Graph& g) { return softmax(g.parameter("x")); }, {{"x", random_tensor({n, m + 1}, rng)}});
    add("log_softmax", [](Graph& g) { return log_softmax(g.parameter("x")); },
        {{"x", random_tensor({n, k + 1}, rng)}});
    add("cross_entropy",
        [](Graph& g) { return cross_entropy(g.parameter("logits"), g.input("labels"), Reduction::kMean); },
        {{"logits", random_tensor({n, m + 1}, rng)}}, {{"labels", labels_for(n, m + 1, rng)}});
    add("cross_entropy_sum",
        [](Graph& g) { return cross_entropy(g.parameter("logits"), g.input("labels"), Reduction::kSum); },
        {{"logits", random_tensor({n, k + 1}, rng)}}, {{"labels", labels_for(n, k + 1, rng)}});
    add("weighted_cross_entropy",
        [](Graph& g) { return weighted_cross_entropy(g.parameter("logits"), g.input("labels"), g.parameter("w")); },
        {{"logits", random_tensor({n, m + 1}, rng)}, {"w", random_tensor({n}, rng)}},
        {{"labels", labels_for(n, m + 1, rng)}});
    add("concat",
        [](Graph& g) {
          std::vector<Var> parts{g.parameter("a"), g.parameter("b")};
          return concat(parts);
        },
        {{"a", random_tensor({n, k, 2}, rng)}, {"b", random_tensor({n, k, m}, rng)}});
    add("reshape", [m = m](Graph& g) { return reshape(g.parameter("x"), {-1, m}); },
        {{"x", random_tensor({n, k, m}, rng)}});
    add("mean", [](Graph& g) { return mean(g.parameter("x")); }, {{"x", random_tensor({n, k, m}, rng)}});
    add("sum", [](Graph& g) { return sum(g.parameter("x")); }, {{"x", random_tensor({n, m}, rng)}});
    add("mix",
        [](Graph& g) {
          std::vector<Var> xs{g.parameter("x0"), g.parameter("x1"), g.parameter("x2")};
          std::vector<Index> slots{0, 2, 3};
          return mix(softmax(g.parameter("alpha")), 1, xs, slots);
        },
        {{"alpha", random_tensor({2, 4}, rng)},
         {"x0", random_tensor({n, k, m}, rng)},
         {"x1", random_tensor({n, k, m}, rng)},
         {"x2", random_tensor({n, k, m}, rng)}});
    add("gather_rows", [](Graph& g) { return gather_rows(g.parameter("table"), g.input("labels")); },
        {{"table", random_tensor({k + 1, m}, rng)}}, {{"labels", labels_for(n + 2, k + 1, rng)}});
  }

  struct ImageShape {
    Index n, h, w, c;
  };
  for (ImageShape s : {ImageShape{2, 5, 5, 3}, ImageShape{1, 6, 4, 2}, ImageShape{3, 4, 4, 1}}) {
    const Shape x_shape{s.n, s.h, s.w, s.c};
    add("conv2d_same", [](Graph& g) { return conv2d(g.parameter("x"), g.parameter("w"), {1, 1, 1}); },
        {{"x", random_tensor(x_shape, rng)}, {"w", random_tensor({3, 3, s.c, 2}, rng)}});
    add("conv2d_stride2_valid", [](Graph& g) { return conv2d(g.parameter("x"), g.parameter("w"), {2, 0, 1}); },
        {{"x", random_tensor(x_shape, rng)}, {"w", random_tensor({2, 2, s.c, 3}, rng)}});
    add("conv2d_pointwise", [](Graph& g) { return conv2d(g.parameter("x"), g.parameter("w"), {1, 0, 1}); },
        {{"x", random_tensor(x_shape, rng)}, {"w", random_tensor({1, 1, s.c, 2}, rng)}});
    add("conv2d_dilated", [](Graph& g) { return conv2d(g.parameter("x"), g.parameter("w"), {1, 2, 2}); },
        {{"x", random_tensor(x_shape, rng)}, {"w", random_tensor({3, 3, s.c, 2}, rng)}});
    add("depthwise_conv2d", [](Graph& g) { return depthwise_conv2d(g.parameter("x"), g.parameter("w"), {1, 2, 1}); },
        {{"x", random_tensor(x_shape, rng)}, {"w", random_tensor({5, 5, s.c}, rng)}});
    add("depthwise_conv2d_dilated_stride2",
        [](Graph& g) { return depthwise_conv2d(g.parameter("x"), g.parameter("w"), {2, 2, 2}); },
        {{"x", random_tensor(x_shape, rng)}, {"w", random_tensor({3, 3, s.c}, rng)}});
    add("max_pool", [](Graph& g) { return max_pool(g.parameter("x"), 3, 1, 1); },
        {{"x", random_distinct(x_shape, rng)}});
    add("max_pool_stride2", [](Graph& g) { return max_pool(g.parameter("x"), 3, 2, 1); },
        {{"x", random_distinct(x_shape, rng)}});
    add("avg_pool", [](Graph& g) { return avg_pool(g.parameter("x"), 3, 1, 1); }, {{"x", random_tensor(x_shape, rng)}});
    add("avg_pool_stride2", [](Graph& g) { return avg_pool(g.parameter("x"), 3, 2, 1); },
        {{"x", random_tensor(x_shape, rng)}});
    add("batch_norm", [](Graph& g) { return batch_norm(g.parameter("x")); }, {{"x", random_tensor(x_shape, rng)}});
    add("spatial_mean", [](Graph& g) { return spatial_mean(g.parameter("x")); },
        {{"x", random_tensor(x_shape, rng)}});
    add("upsample2x", [](Graph& g) { return upsample2x(g.parameter("x")); }, {{"x", random_tensor(x_shape, rng)}});
  }
  return cases;
}

}  // namespace lfm::gradcheck
