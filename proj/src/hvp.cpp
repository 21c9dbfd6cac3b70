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

#include "lfm/hvp.hpp"

namespace lfm {

GradientMap hvp(const GradientFn& grad, const WeightSet& params, const GradientMap& v, Scalar eps) {
  if (!same_structure(params, v)) throw ShapeError("hvp: direction does not match parameter set");
  const Scalar n = norm(v);
  if (!(n >= kMinDirectionNorm)) throw ValidationError("hvp: direction has (near-)zero norm");
  if (!(eps > Scalar(0))) throw ValidationError("hvp: eps must be positive");
  const Scalar h = eps / n;
  const GradientMap plus = grad(axpy(params, h, v));
  const GradientMap minus = grad(axpy(params, -h, v));
  GradientMap out = axpy(plus, Scalar(-1), minus);
  for (auto& [_, t] : out) t.array() /= Scalar(2) * h;
  return out;
}

}  // namespace lfm
