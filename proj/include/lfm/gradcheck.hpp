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

// Finite-difference gradient checking used by the test suites and the
// verify command. Only forward() builds the numerical reference.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "lfm/graph.hpp"

namespace lfm::gradcheck {

using Builder = std::function<Var(Graph&)>;

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, Scalar scale = 1) {
  std::normal_distribution<Scalar> normal(0, scale);
  Tensor t(shape);
  for (Index i = 0; i < t.size(); ++i) t[i] = normal(rng);
  return t;
}

// Entries bounded away from zero (for ReLU-style kinks).
inline Tensor random_away_from_zero(const Shape& shape, std::mt19937_64& rng, Scalar gap = Scalar(0.05)) {
  Tensor t = random_tensor(shape, rng);
  for (Index i = 0; i < t.size(); ++i) t[i] = t[i] >= 0 ? t[i] + gap : t[i] - gap;
  return t;
}

// Distinct values on a 0.01 grid, randomly placed: no near-ties for max.
inline Tensor random_distinct(const Shape& shape, std::mt19937_64& rng) {
  Tensor t(shape);
  std::vector<Index> order(static_cast<std::size_t>(t.size()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Index>(i);
  std::shuffle(order.begin(), order.end(), rng);
  for (Index i = 0; i < t.size(); ++i) t[i] = Scalar(0.01) * Scalar(order[static_cast<std::size_t>(i)] - t.size() / 2);
  return t;
}

struct Leaves {
  TensorMap params;
  TensorMap inputs;
};

// Scalarizes a possibly non-scalar output as sum(out * r) with a fixed random r.
class ScalarizedModel {
 public:
  ScalarizedModel(const Builder& build, const Leaves& leaves, std::uint64_t seed) : leaves_(leaves) {
    Graph probe;
    Var out = build(probe);
    probe.set_output("out", out);
    Bindings b;
    b.bind(leaves_.params).bind(leaves_.inputs);
    const Tensor value = forward(probe, b, {"out"}).output("out");
    std::mt19937_64 rng(seed);
    Var y = build(graph_);
    if (value.size() == 1) {
      graph_.set_output("loss", sum(y));
    } else {
      Var r = graph_.constant(random_tensor(value.shape(), rng));
      graph_.set_output("loss", sum(y * r));
    }
  }

  Scalar value(const TensorMap& params) const {
    Bindings b;
    b.bind(params).bind(leaves_.inputs);
    return forward(graph_, b, {"loss"}).output("loss").item();
  }

  GradientMap gradient(const TensorMap& params) const {
    Bindings b;
    b.bind(params).bind(leaves_.inputs);
    const Evaluation eval = forward(graph_, b, {"loss"});
    return backward(eval, "loss");
  }

  GradientMap numerical_gradient(const TensorMap& params, Scalar h) const {
    GradientMap out = zeros_like(params);
    TensorMap probe = params;
    for (auto& [name, t] : probe) {
      Tensor& g = out.at(name);
      for (Index i = 0; i < t.size(); ++i) {
        const Scalar saved = t[i];
        t[i] = saved + h;
        const Scalar fp = value(probe);
        t[i] = saved - h;
        const Scalar fm = value(probe);
        t[i] = saved;
        g[i] = (fp - fm) / (2 * h);
      }
    }
    return out;
  }

 private:
  Leaves leaves_;
  Graph graph_;
};

struct GradCheck {
  Scalar worst_relative = 0;     // norm-wise, worst parameter tensor
  Scalar worst_elementwise = 0;  // |a - n| / max(|a|, |n|, floor)
  std::string worst_param;
};

inline GradCheck check_gradients(const Builder& build, const Leaves& leaves, Scalar h = Scalar(1e-5),
                                 std::uint64_t seed = 7, Scalar elementwise_floor = Scalar(1e-3)) {
  ScalarizedModel model(build, leaves, seed);
  const GradientMap analytic = model.gradient(leaves.params);
  const GradientMap numeric = model.numerical_gradient(leaves.params, h);
  GradCheck result;
  for (const auto& [name, a] : analytic) {
    const Tensor& n = numeric.at(name);
    const Scalar diff = (a.array() - n.array()).matrix().norm();
    const Scalar scale = std::max({a.array().matrix().norm(), n.array().matrix().norm(), Scalar(1e-12)});
    const Scalar rel = diff / scale;
    if (rel >= result.worst_relative) {
      result.worst_relative = rel;
      result.worst_param = name;
    }
    for (Index i = 0; i < a.size(); ++i) {
      const Scalar d = std::abs(a[i] - n[i]) / std::max({std::abs(a[i]), std::abs(n[i]), elementwise_floor});
      result.worst_elementwise = std::max(result.worst_elementwise, d);
    }
  }
  return result;
}

// One gradient-check case per primitive and shape.
struct PrimitiveCase {
  std::string op;
  Builder build;
  Leaves leaves;
};

std::vector<PrimitiveCase> primitive_cases(std::uint64_t seed);

}  // namespace lfm::gradcheck
