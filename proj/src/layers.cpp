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

#include "lfm/layers.hpp"

#include <cmath>
#include <random>

#include "lfm/hash.hpp"

namespace lfm {

Var ParamFactory::uniform(const std::string& name, const Shape& shape, Scalar bound) {
  const std::string full = prefix_ + name;
  if (init_ != nullptr && !init_->contains(full)) {
    std::mt19937_64 rng(fnv1a(full, seed_ ^ 0x9e3779b97f4a7c15ULL));
    std::uniform_real_distribution<double> u(-double(bound), double(bound));
    Tensor t(shape);
    for (Index i = 0; i < t.size(); ++i) t[i] = Scalar(u(rng));
    init_->emplace(full, std::move(t));
  }
  return graph_->parameter(full);
}

Var ParamFactory::zeros(const std::string& name, const Shape& shape) {
  const std::string full = prefix_ + name;
  if (init_ != nullptr && !init_->contains(full)) init_->emplace(full, Tensor::zeros(shape));
  return graph_->parameter(full);
}

Var ParamFactory::conv_weight(const std::string& name, Index k, Index cin, Index cout) {
  return uniform(name, {k, k, cin, cout}, Scalar(1) / std::sqrt(Scalar(k * k * cin)));
}

Var ParamFactory::depthwise_weight(const std::string& name, Index k, Index channels) {
  return uniform(name, {k, k, channels}, Scalar(1) / Scalar(k));
}

Var ParamFactory::linear_weight(const std::string& name, Index in, Index out) {
  return uniform(name, {in, out}, Scalar(1) / std::sqrt(Scalar(in)));
}

Var ParamFactory::bias(const std::string& name, Index n, Index fan_in) {
  return uniform(name, {n}, Scalar(1) / std::sqrt(Scalar(fan_in)));
}

Var relu_conv_bn(ParamFactory& pf, Var x, const std::string& name, Index cin, Index cout, Index k, int stride,
                 int pad) {
  Var w = pf.conv_weight(name + ".conv", k, cin, cout);
  return batch_norm(conv2d(relu(x), w, {stride, pad, 1}));
}

Var factorized_reduce(ParamFactory& pf, Var x, const std::string& name, Index cin, Index cout) {
  return relu_conv_bn(pf, x, name, cin, cout, 2, 2, 0);
}

Var sep_conv(ParamFactory& pf, Var x, const std::string& name, Index channels, Index k, int stride) {
  const int pad = static_cast<int>(k / 2);
  Var y = depthwise_conv2d(relu(x), pf.depthwise_weight(name + ".dw1", k, channels), {stride, pad, 1});
  y = batch_norm(conv2d(y, pf.conv_weight(name + ".pw1", 1, channels, channels)));
  y = depthwise_conv2d(relu(y), pf.depthwise_weight(name + ".dw2", k, channels), {1, pad, 1});
  return batch_norm(conv2d(y, pf.conv_weight(name + ".pw2", 1, channels, channels)));
}

Var dil_conv(ParamFactory& pf, Var x, const std::string& name, Index channels, Index k, int stride) {
  const int pad = static_cast<int>(k - 1);
  Var y = depthwise_conv2d(relu(x), pf.depthwise_weight(name + ".dw", k, channels), {stride, pad, 2});
  return batch_norm(conv2d(y, pf.conv_weight(name + ".pw", 1, channels, channels)));
}

Var linear(ParamFactory& pf, Var x, const std::string& name, Index in, Index out) {
  return add_bias(matmul(x, pf.linear_weight(name + ".w", in, out)), pf.bias(name + ".b", out, in));
}

}  // namespace lfm
