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

#include "lfm/weights.hpp"

#include <cmath>

namespace lfm {

Index total_size(const TensorMap& m) {
  Index n = 0;
  for (const auto& [_, t] : m) n += t.size();
  return n;
}

Vector flatten(const TensorMap& m) {
  Vector flat(total_size(m));
  Index offset = 0;
  for (const auto& [_, t] : m) {
    flat.segment(offset, t.size()) = t.array().matrix();
    offset += t.size();
  }
  return flat;
}

TensorMap unflatten(const Vector& flat, const TensorMap& like) {
  if (flat.size() != total_size(like)) {
    throw ShapeError("unflatten: " + std::to_string(flat.size()) + " values for " +
                     std::to_string(total_size(like)) + " parameters");
  }
  TensorMap out;
  Index offset = 0;
  for (const auto& [name, t] : like) {
    out.emplace(name, Tensor(t.shape(), flat.segment(offset, t.size()).array()));
    offset += t.size();
  }
  return out;
}

TensorMap zeros_like(const TensorMap& m) {
  TensorMap out;
  for (const auto& [name, t] : m) out.emplace(name, Tensor::zeros(t.shape()));
  return out;
}

bool same_structure(const TensorMap& a, const TensorMap& b) {
  if (a.size() != b.size()) return false;
  for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first || ia->second.shape() != ib->second.shape()) return false;
  }
  return true;
}

TensorMap axpy(const TensorMap& a, Scalar s, const TensorMap& b) {
  if (!same_structure(a, b)) throw ShapeError("axpy: parameter sets differ");
  TensorMap out;
  auto ib = b.begin();
  for (const auto& [name, t] : a) {
    out.emplace(name, Tensor(t.shape(), t.array() + s * ib->second.array()));
    ++ib;
  }
  return out;
}

Scalar dot(const TensorMap& a, const TensorMap& b) {
  if (!same_structure(a, b)) throw ShapeError("dot: parameter sets differ");
  Scalar acc = 0;
  auto ib = b.begin();
  for (const auto& [_, t] : a) {
    acc += (t.array() * ib->second.array()).sum();
    ++ib;
  }
  return acc;
}

Scalar norm(const TensorMap& m) { return std::sqrt(dot(m, m)); }

bool all_finite(const TensorMap& m) {
  for (const auto& [_, t] : m) {
    if (!t.all_finite()) return false;
  }
  return true;
}

TensorMap prefixed(const TensorMap& m, const std::string& prefix) {
  TensorMap out;
  for (const auto& [name, t] : m) out.emplace(prefix + name, t);
  return out;
}

TensorMap strip_prefix(const TensorMap& m, const std::string& prefix) {
  TensorMap out;
  for (const auto& [name, t] : m) {
    if (name.rfind(prefix, 0) == 0) out.emplace(name.substr(prefix.size()), t);
  }
  return out;
}

}  // namespace lfm
