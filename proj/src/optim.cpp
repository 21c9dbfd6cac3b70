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

#include "lfm/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace lfm {

std::string_view optimizer_name(OptimizerKind kind) { return kind == OptimizerKind::kSgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ValidationError("unknown optimizer '" + std::string(name) + "'");
}

OptimizerConfig OptimizerConfig::plain(Scalar lr) {
  OptimizerConfig c;
  c.lr = lr;
  return c;
}

OptimizerConfig OptimizerConfig::sgd(Scalar lr, Scalar momentum, Scalar weight_decay, Scalar clip_norm) {
  OptimizerConfig c;
  c.lr = lr;
  c.momentum = momentum;
  c.weight_decay = weight_decay;
  c.clip_norm = clip_norm;
  return c;
}

OptimizerConfig OptimizerConfig::adam(Scalar lr, Scalar beta1, Scalar beta2, Scalar weight_decay) {
  OptimizerConfig c;
  c.kind = OptimizerKind::kAdam;
  c.lr = lr;
  c.beta1 = beta1;
  c.beta2 = beta2;
  c.weight_decay = weight_decay;
  return c;
}

void OptimizerConfig::validate() const {
  auto finite_nonneg = [](Scalar x) { return std::isfinite(x) && x >= 0; };
  if (!finite_nonneg(lr)) throw ValidationError("optimizer: learning rate must be finite and >= 0");
  if (!finite_nonneg(weight_decay)) throw ValidationError("optimizer: weight decay must be finite and >= 0");
  if (!finite_nonneg(clip_norm)) throw ValidationError("optimizer: clip norm must be finite and >= 0");
  if (!(momentum >= 0 && momentum < 1)) throw ValidationError("optimizer: momentum must lie in [0, 1)");
  if (kind == OptimizerKind::kAdam) {
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
      throw ValidationError("optimizer: adam betas must lie in [0, 1)");
    }
    if (!(eps > 0)) throw ValidationError("optimizer: adam eps must be positive");
  }
}

Optimizer::Optimizer(OptimizerConfig config) : config_(config) { config_.validate(); }

void Optimizer::set_lr(Scalar lr) {
  if (!(lr >= 0) || !std::isfinite(lr)) throw ValidationError("optimizer: learning rate must be finite and >= 0");
  config_.lr = lr;
}

Scalar Optimizer::step(Vector& x, const Vector& grad) {
  if (grad.size() != x.size()) throw ShapeError("optimizer: gradient length does not match parameters");
  if (!grad.allFinite()) throw NonFiniteError("optimizer: non-finite gradient");
  const Scalar norm = grad.norm();
  Vector g = grad;
  clip_scale_ = 1;
  clip_dir_.resize(0);
  if (config_.clip_norm > 0 && norm > config_.clip_norm) {
    clip_scale_ = config_.clip_norm / norm;
    clip_dir_ = grad / norm;
    g *= clip_scale_;
  }
  if (config_.weight_decay != 0) g += config_.weight_decay * x;
  ++t_;

  if (config_.kind == OptimizerKind::kSgd) {
    if (config_.momentum != 0) {
      if (m_.size() != x.size()) {
        m_ = g;  // first step initializes the buffer with the gradient
      } else {
        m_ = config_.momentum * m_ + g;
      }
      x -= config_.lr * m_;
    } else {
      x -= config_.lr * g;
    }
    return norm;
  }

  if (m_.size() != x.size()) {
    m_ = Vector::Zero(x.size());
    v_ = Vector::Zero(x.size());
  }
  m_ = config_.beta1 * m_ + (1 - config_.beta1) * g;
  v_ = config_.beta2 * v_ + (1 - config_.beta2) * g.cwiseAbs2();
  last_grad_ = g;
  const Scalar b1 = 1 - std::pow(config_.beta1, Scalar(t_));
  const Scalar b2 = 1 - std::pow(config_.beta2, Scalar(t_));
  x.array() -= config_.lr * (m_.array() / b1) / ((v_.array() / b2).sqrt() + config_.eps);
  return norm;
}

Vector Optimizer::step_jacobian_t(const Vector& u) const {
  // J = D C with D the update's derivative in the (clipped) gradient and C
  // the clipping Jacobian; both are symmetric, so J^T u = C (D u).
  Vector w;
  if (config_.kind == OptimizerKind::kSgd) {
    w = config_.lr * u;
  } else {
    if (t_ == 0 || last_grad_.size() != u.size()) throw ValidationError("optimizer: no step taken yet");
    const Scalar b1 = 1 - std::pow(config_.beta1, Scalar(t_));
    const Scalar b2 = 1 - std::pow(config_.beta2, Scalar(t_));
    w.resize(u.size());
    for (Index i = 0; i < u.size(); ++i) {
      const Scalar root = std::sqrt(v_[i] / b2);
      const Scalar denom = root + config_.eps;
      Scalar j = (1 - config_.beta1) / (b1 * denom);
      if (root > 0) j -= (m_[i] / b1) * (1 - config_.beta2) * last_grad_[i] / (b2 * root * denom * denom);
      w[i] = config_.lr * j * u[i];
    }
  }
  if (clip_dir_.size() == u.size()) {
    // d(c g / ||g||)/dg = (c / ||g||) (I - g g^T / ||g||^2)
    w = clip_scale_ * (w - clip_dir_ * clip_dir_.dot(w));
  }
  return w;
}

void Optimizer::restore(Vector first, Vector second, Index steps) {
  m_ = std::move(first);
  v_ = std::move(second);
  t_ = steps;
  last_grad_.resize(0);
  clip_dir_.resize(0);
  clip_scale_ = 1;
}

Scalar cosine_rate(Scalar initial, Scalar floor, Index epoch, Index epochs) {
  if (epochs <= 0) return initial;
  const Scalar e = Scalar(std::min(epoch, epochs));
  return floor + Scalar(0.5) * (initial - floor) * (1 + std::cos(std::numbers::pi_v<Scalar> * e / Scalar(epochs)));
}

}  // namespace lfm
