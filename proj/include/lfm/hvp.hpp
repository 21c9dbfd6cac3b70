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

#include <functional>

#include "lfm/tensor.hpp"
#include "lfm/weights.hpp"

namespace lfm {

// Default finite-difference radius; the actual step is eps / ||v||.
inline constexpr Scalar kDefaultHvpEps = Scalar(0.01);
// Directions shorter than this are rejected.
inline constexpr Scalar kMinDirectionNorm = Scalar(1e-12);

// Gradient of some scalar loss, evaluated with `params` substituted. The
// returned map may cover a different parameter set than `params`; that
// turns hvp() into a mixed second-derivative product.
using GradientFn = std::function<GradientMap(const WeightSet& params)>;

// Central-difference Hessian-vector product
//   [grad(params + h v) - grad(params - h v)] / 2h,  h = eps / ||v||.
// Exact up to roundoff when the loss is quadratic in `params`.
GradientMap hvp(const GradientFn& grad, const WeightSet& params, const GradientMap& v, Scalar eps = kDefaultHvpEps);

// Same contraction over flat vectors.
template <typename T>
VectorX<T> hvp(const std::function<VectorX<T>(const VectorX<T>&)>& grad, const VectorX<T>& x,
               const VectorX<T>& v, T eps = T(kDefaultHvpEps)) {
  const T n = v.norm();
  if (!(n >= T(kMinDirectionNorm))) throw ValidationError("hvp: direction has (near-)zero norm");
  if (!(eps > T(0))) throw ValidationError("hvp: eps must be positive");
  const T h = eps / n;
  const VectorX<T> plus = grad(x + h * v);
  const VectorX<T> minus = grad(x - h * v);
  return (plus - minus) / (T(2) * h);
}

}  // namespace lfm
