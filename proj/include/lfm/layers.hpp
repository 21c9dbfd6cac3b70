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

// Parameter declaration and the small convolutional blocks shared by the
// supernet, the evaluation network, the discriminator and the generator.

#pragma once

#include <cstdint>
#include <string>

#include "lfm/graph.hpp"

namespace lfm {

// Declares prefixed parameter leaves on a graph. When an init target is
// given, each new parameter is also initialized into it; the draw for a
// parameter depends only on (seed, name), so initialization does not depend
// on declaration order.
class ParamFactory {
 public:
  ParamFactory(Graph& graph, std::string prefix, WeightSet* init = nullptr, std::uint64_t seed = 0)
      : graph_(&graph), prefix_(std::move(prefix)), init_(init), seed_(seed) {}

  Graph& graph() { return *graph_; }
  const std::string& prefix() const { return prefix_; }

  // Uniform in [-bound, bound].
  Var uniform(const std::string& name, const Shape& shape, Scalar bound);
  Var zeros(const std::string& name, const Shape& shape);

  Var conv_weight(const std::string& name, Index k, Index cin, Index cout);
  Var depthwise_weight(const std::string& name, Index k, Index channels);
  Var linear_weight(const std::string& name, Index in, Index out);
  Var bias(const std::string& name, Index n, Index fan_in);

 private:
  Graph* graph_;
  std::string prefix_;
  WeightSet* init_;
  std::uint64_t seed_;
};

Var relu_conv_bn(ParamFactory& pf, Var x, const std::string& name, Index cin, Index cout, Index k, int stride,
                 int pad);
// Halves the spatial size with a 2x2 stride-2 convolution.
Var factorized_reduce(ParamFactory& pf, Var x, const std::string& name, Index cin, Index cout);
Var sep_conv(ParamFactory& pf, Var x, const std::string& name, Index channels, Index k, int stride);
Var dil_conv(ParamFactory& pf, Var x, const std::string& name, Index channels, Index k, int stride);
Var linear(ParamFactory& pf, Var x, const std::string& name, Index in, Index out);

}  // namespace lfm
