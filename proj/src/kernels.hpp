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

#include "lfm/graph.hpp"
#include "lfm/tensor.hpp"

// Forward/backward kernels for the graph primitives. Image tensors are NHWC.
// Backward kernels accumulate into the (pre-sized) gradient tensors they are
// handed; a null pointer means that gradient is not needed.
namespace lfm::kernels {

inline constexpr Scalar kBatchNormEps = Scalar(1e-5);

Tensor matmul(const Tensor& a, const Tensor& b);
void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& dy, Tensor* da, Tensor* db);

Tensor conv2d(const Tensor& x, const Tensor& w, const ConvAttrs& attrs);
void conv2d_backward(const Tensor& x, const Tensor& w, const ConvAttrs& attrs, const Tensor& dy, Tensor* dx,
                     Tensor* dw);

Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, const ConvAttrs& attrs);
void depthwise_conv2d_backward(const Tensor& x, const Tensor& w, const ConvAttrs& attrs, const Tensor& dy,
                               Tensor* dx, Tensor* dw);

Tensor max_pool(const Tensor& x, int window, const ConvAttrs& attrs);
void max_pool_backward(const Tensor& x, int window, const ConvAttrs& attrs, const Tensor& dy, Tensor* dx);

// Padding cells are excluded from the average.
Tensor avg_pool(const Tensor& x, int window, const ConvAttrs& attrs);
void avg_pool_backward(const Tensor& x, int window, const ConvAttrs& attrs, const Tensor& dy, Tensor* dx);

// Normalizes each channel (last axis) with statistics over all other axes.
Tensor batch_norm(const Tensor& x);
void batch_norm_backward(const Tensor& x, const Tensor& y, const Tensor& dy, Tensor* dx);

Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);
void softmax_backward(const Tensor& y, const Tensor& dy, Tensor* dx);
void log_softmax_backward(const Tensor& y, const Tensor& dy, Tensor* dx);

// Per-example cross-entropy of logits [N, C] against integer labels [N].
Tensor cross_entropy_terms(const Tensor& logits, const Tensor& labels);
// Adds coeff[i] * (softmax(logits_i) - onehot(label_i)) to dlogits row i.
void cross_entropy_backward(const Tensor& logits, const Tensor& labels, std::span<const Scalar> coeff,
                            Tensor* dlogits);

Tensor spatial_mean(const Tensor& x);
void spatial_mean_backward(const Tensor& x, const Tensor& dy, Tensor* dx);

Tensor upsample2x(const Tensor& x);
void upsample2x_backward(const Tensor& x, const Tensor& dy, Tensor* dx);

Tensor concat_last(const std::vector<const Tensor*>& parts);
void concat_last_backward(const std::vector<const Tensor*>& parts, const Tensor& dy, const std::vector<Tensor*>& dparts);

Index checked_label(Scalar value, Index classes);

}  // namespace lfm::kernels
