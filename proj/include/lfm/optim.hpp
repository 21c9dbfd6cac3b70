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

// First-order optimizers over flat parameter vectors, following the usual
// deep-learning conventions (L2-coupled weight decay, bias-corrected Adam).
// Each optimizer also exposes the derivative of its last update with
// respect to the gradient it consumed, which the hypergradient needs to
// differentiate through one unrolled step.

#pragma once

#include <string_view>

#include "lfm/tensor.hpp"

namespace lfm {

enum class OptimizerKind { kSgd, kAdam };

std::string_view optimizer_name(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kSgd;
  Scalar lr = Scalar(0.025);
  Scalar momentum = 0;  // sgd
  Scalar beta1 = Scalar(0.5);
  Scalar beta2 = Scalar(0.999);
  Scalar eps = Scalar(1e-8);
  Scalar weight_decay = 0;
  Scalar clip_norm = 0;  // global-norm clip of the raw gradient, 0 = off

  // x <- x - lr * g, nothing else.
  static OptimizerConfig plain(Scalar lr);
  static OptimizerConfig sgd(Scalar lr, Scalar momentum, Scalar weight_decay, Scalar clip_norm);
  static OptimizerConfig adam(Scalar lr, Scalar beta1, Scalar beta2, Scalar weight_decay);

  void validate() const;
};

class Optimizer {
 public:
  Optimizer() = default;
  explicit Optimizer(OptimizerConfig config);

  const OptimizerConfig& config() const { return config_; }
  Scalar lr() const { return config_.lr; }
  void set_lr(Scalar lr);
  Index steps() const { return t_; }

  // One update x <- x - delta(grad). Returns the raw gradient norm.
  Scalar step(Vector& x, const Vector& grad);

  // J^T u, where J = d delta / d grad at the last step with x held fixed.
  // J is symmetric for both optimizers. Momentum and weight decay do not
  // enter it; clipping and Adam's second moment do. Plain SGD gives lr * u.
  Vector step_jacobian_t(const Vector& u) const;

  // Moment buffers, for checkpoints: sgd uses `first` only.
  const Vector& first_moment() const { return m_; }
  const Vector& second_moment() const { return v_; }
  void restore(Vector first, Vector second, Index steps);

 private:
  OptimizerConfig config_;
  Vector m_, v_;
  Index t_ = 0;
  // Saved from the last step for step_jacobian_t.
  Vector last_grad_;       // effective gradient fed to the moment update (adam)
  Scalar clip_scale_ = 1;  // clip / ||g|| when clipping was active
  Vector clip_dir_;        // unit raw gradient when clipping was active
};

// Per-epoch cosine decay from `initial` to `floor` over `epochs` epochs.
Scalar cosine_rate(Scalar initial, Scalar floor, Index epoch, Index epochs);

}  // namespace lfm
