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

#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "lfm/tensor.hpp"

namespace lfm {

// Ordered so that flattening is deterministic.
using TensorMap = std::map<std::string, Tensor>;
// Parameter tensors of one network (W1, W2, G or H).
using WeightSet = TensorMap;
// Per-parameter gradients, keyed and shaped like the WeightSet they belong to.
using GradientMap = TensorMap;

Index total_size(const TensorMap& m);

// Concatenates the tensors in key order.
Vector flatten(const TensorMap& m);
// Inverse of flatten(): writes `flat` into a copy of `like`.
TensorMap unflatten(const Vector& flat, const TensorMap& like);

TensorMap zeros_like(const TensorMap& m);
// a + s * b, keys and shapes must match.
TensorMap axpy(const TensorMap& a, Scalar s, const TensorMap& b);
Scalar dot(const TensorMap& a, const TensorMap& b);
Scalar norm(const TensorMap& m);
bool all_finite(const TensorMap& m);
bool same_structure(const TensorMap& a, const TensorMap& b);

// Prefixes every key, used to keep parameter names of several networks
// apart inside one graph.
TensorMap prefixed(const TensorMap& m, const std::string& prefix);
TensorMap strip_prefix(const TensorMap& m, const std::string& prefix);

}  // namespace lfm
