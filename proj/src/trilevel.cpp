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

#include "lfm/trilevel.hpp"

#include <cmath>

#include "lfm/hvp.hpp"

namespace lfm {

std::string_view hypergrad_mode_name(HypergradMode mode) {
  return mode == HypergradMode::kFirstOrder ? "first" : "second";
}

HypergradMode parse_hypergrad_mode(std::string_view name) {
  if (name == "first" || name == "first_order") return HypergradMode::kFirstOrder;
  if (name == "second" || name == "second_order") return HypergradMode::kSecondOrder;
  throw ValidationError("unknown hypergradient mode '" + std::string(name) + "'");
}

std::string_view term_name(HypergradTerm term) {
  switch (term) {
    case HypergradTerm::kDirect:
      return "direct";
    case HypergradTerm::kW2Train:
      return "w2_train";
    case HypergradTerm::kW2Synthetic:
      return "w2_synthetic";
    case HypergradTerm::kW2ClassCoupling:
      return "w2_class_coupling";
    case HypergradTerm::kW1Path:
      return "w1_path";
    case HypergradTerm::kGeneratorPath:
      return "generator_path";
  }
  return "?";
}

HypergradTerms HypergradTerms::zeros(Index n) {
  HypergradTerms t;
  for (HypergradTerm k : kAllHypergradTerms) t[k] = Vector::Zero(n);
  return t;
}

Vector& HypergradTerms::operator[](HypergradTerm term) {
  return const_cast<Vector&>(static_cast<const HypergradTerms&>(*this)[term]);
}

const Vector& HypergradTerms::operator[](HypergradTerm term) const {
  switch (term) {
    case HypergradTerm::kDirect:
      return direct;
    case HypergradTerm::kW2Train:
      return w2_train;
    case HypergradTerm::kW2Synthetic:
      return w2_synthetic;
    case HypergradTerm::kW2ClassCoupling:
      return w2_class_coupling;
    case HypergradTerm::kW1Path:
      return w1_path;
    case HypergradTerm::kGeneratorPath:
      return generator_path;
  }
  throw Error("unknown hypergradient term");
}

Vector HypergradTerms::total() const {
  Vector sum = direct;
  for (HypergradTerm k : kAllHypergradTerms) {
    if (k != HypergradTerm::kDirect) sum += (*this)[k];
  }
  return sum;
}

void HypergradOptions::validate() const {
  if (mode == HypergradMode::kSecondOrder && !(hvp_eps > 0 && std::isfinite(hvp_eps))) {
    throw ValidationError("hypergradient: second-order mode needs a positive hvp epsilon");
  }
}

void RateSchedule::validate() const {
  for (Scalar r : {w1, w2, g, h, a, floor}) {
    if (!(r >= 0) || !std::isfinite(r)) throw ValidationError("rates must be finite and >= 0");
  }
}

TrilevelOptions TrilevelOptions::plain(Scalar xi_w1, Scalar xi_w2, Scalar xi_g, Scalar xi_h, Scalar xi_a) {
  TrilevelOptions o;
  o.rates = RateSchedule{xi_w1, xi_w2, xi_g, xi_h, xi_a, false, 0};
  o.w_optimizer = OptimizerConfig::plain(xi_w1);
  o.gan_optimizer = OptimizerConfig::plain(xi_g);
  o.arch_optimizer = OptimizerConfig::adam(xi_a, 0.5, 0.999, 0);
  return o;
}

void TrilevelOptions::validate() const {
  rates.validate();
  w_optimizer.validate();
  gan_optimizer.validate();
  arch_optimizer.validate();
  weighting.validate();
  hypergrad.validate();
}

namespace {

Optimizer with_rate(OptimizerConfig cfg, Scalar lr) {
  cfg.lr = lr;
  return Optimizer(cfg);
}

void require_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw NonFiniteError(std::string("non-finite ") + what);
}

// Central difference of a vector-valued map along `direction` at x:
// [f(x + h d) - f(x - h d)] / 2h with h = eps / ||d||. Returns zeros when the
// direction vanishes, so a term with no upstream signal contributes nothing.
template <typename F>
Vector directional_difference(const F& f, const Vector& x, const Vector& direction, Scalar eps, Index out_size) {
  const Scalar n = direction.norm();
  if (!(n >= kMinDirectionNorm)) return Vector::Zero(out_size);
  const Scalar h = eps / n;
  const Vector plus = f(Vector(x + h * direction));
  const Vector minus = f(Vector(x - h * direction));
  return (plus - minus) / (2 * h);
}

}  // namespace

TrilevelState TrilevelState::create(Vector a, Vector w1, Vector w2, Vector g, Vector h,
                                    const TrilevelOptions& options) {
  options.validate();
  if (w1.size() != w2.size()) throw ShapeError("trilevel state: W1 and W2 must share a layout");
  TrilevelState s;
  s.a = std::move(a);
  s.w1 = std::move(w1);
  s.w2 = std::move(w2);
  s.g = std::move(g);
  s.h = std::move(h);
  s.opt_a = with_rate(options.arch_optimizer, options.rates.a);
  s.opt_w1 = with_rate(options.w_optimizer, options.rates.w1);
  s.opt_w2 = with_rate(options.w_optimizer, options.rates.w2);
  s.opt_g = with_rate(options.gan_optimizer, options.rates.g);
  s.opt_h = with_rate(options.gan_optimizer, options.rates.h);
  return s;
}

bool TrilevelState::all_finite() const {
  return a.allFinite() && w1.allFinite() && w2.allFinite() && g.allFinite() && h.allFinite();
}

void apply_schedule(TrilevelState& state, const TrilevelOptions& options, Index epoch, Index epochs) {
  const RateSchedule& r = options.rates;
  if (r.cosine) {
    state.opt_w1.set_lr(cosine_rate(r.w1, r.floor, epoch, epochs));
    state.opt_w2.set_lr(cosine_rate(r.w2, r.floor, epoch, epochs));
  } else {
    state.opt_w1.set_lr(r.w1);
    state.opt_w2.set_lr(r.w2);
  }
  state.opt_g.set_lr(r.g);
  state.opt_h.set_lr(r.h);
  state.opt_a.set_lr(r.a);
}

Scalar step_w1(const TrilevelProblem& problem, TrilevelState& state) {
  const LossGrad lg = problem.train_loss(state.a, state.w1, kNeedW);
  state.opt_w1.step(state.w1, lg.d_w);
  return lg.value;
}

GanEval step_gan(const TrilevelProblem& problem, TrilevelState& state) {
  const GanEval e = problem.gan(state.a, state.g, state.h, kNeedG | kNeedH);
  require_finite(e.d_g, "generator gradient");
  require_finite(e.d_h, "discriminator gradient");
  state.opt_g.step(state.g, e.d_g);
  state.opt_h.step(state.h, Vector(-e.d_h));  // ascent
  return e;
}

W2Step step_w2(const TrilevelProblem& problem, TrilevelState& state, const ClassLossVector& l,
               const WeightingConfig& cfg) {
  W2Step out;
  Vector grad = Vector::Zero(state.w2.size());
  if (!cfg.synthetic_only) {
    const LossGrad real = problem.train_loss(state.a, state.w2, kNeedW);
    out.real = real.value;
    grad = real.d_w;
  }
  if (cfg.lambda != 0) {
    const SyntheticEval s = problem.synthetic_loss(state.a, state.w2, state.g, class_weights(l, cfg), kNeedW);
    out.synthetic = s.value;
    grad += s.d_w;
  }
  state.opt_w2.step(state.w2, grad);
  return out;
}

HypergradTerms hypergradient(const TrilevelProblem& problem, const TrilevelState& state,
                             const IterationContext& ctx, const TrilevelOptions& options) {
  const Index na = state.a.size();
  const WeightingConfig& cfg = options.weighting;
  const Scalar eps = options.hypergrad.hvp_eps;
  const Vector& a = state.a;
  HypergradTerms t = HypergradTerms::zeros(na);

  const LossGrad val = problem.val_loss(a, state.w2, kNeedArch | kNeedW);
  t.val_loss = val.value;
  t.direct = val.d_arch;

  if (options.hypergrad.mode == HypergradMode::kSecondOrder) {
    // v2 = J2^T grad_W L_val: the sensitivity of L_val to W2's update gradient.
    const Vector v2 = state.opt_w2.step_jacobian_t(val.d_w);
    const Scalar vn = v2.norm();
    if (vn >= kMinDirectionNorm) {
      const Scalar h = eps / vn;
      const Vector w2p = ctx.w2_pre + h * v2, w2m = ctx.w2_pre - h * v2;

      if (!cfg.synthetic_only) {
        const Vector dp = problem.train_loss(a, w2p, kNeedArch).d_arch;
        const Vector dm = problem.train_loss(a, w2m, kNeedArch).d_arch;
        t.w2_train = -(dp - dm) / (2 * h);
      }

      if (cfg.lambda != 0) {
        const unsigned need = kNeedArch | kNeedG;
        const SyntheticEval sp = problem.synthetic_loss(a, w2p, state.g, ctx.class_weights, need);
        const SyntheticEval sm = problem.synthetic_loss(a, w2m, state.g, ctx.class_weights, need);
        t.w2_synthetic = -(sp.d_arch - sm.d_arch) / (2 * h);

        // s_c = v2 . grad_W S_c, r = (dw/dl)^T s
        const Vector s = (sp.class_values - sm.class_values) / (2 * h);
        const ClassLossGrads& cl = ctx.class_losses;
        const Vector r = class_weights_vjp(cl.l, cfg, s);
        Vector u1 = Vector::Zero(state.w1.size());
        for (Index k = 0; k < r.size(); ++k) {
          if (r[k] == 0) continue;
          t.w2_class_coupling -= r[k] * cl.d_arch[static_cast<std::size_t>(k)];
          u1 -= r[k] * cl.d_w[static_cast<std::size_t>(k)];
        }

        const Vector u1t = state.opt_w1.step_jacobian_t(u1);
        t.w1_path = -directional_difference(
            [&](const Vector& w) { return problem.train_loss(a, w, kNeedArch).d_arch; }, ctx.w1_pre, u1t, eps, na);

        const Vector ug = -(sp.d_g - sm.d_g) / (2 * h);
        const Vector ugt = state.opt_g.step_jacobian_t(ug);
        t.generator_path = -directional_difference(
            [&](const Vector& g) { return problem.gan(a, g, ctx.h_pre, kNeedArch).d_arch; }, ctx.g_pre, ugt, eps,
            na);
      }
    }
  }

  if (options.hypergrad.negate_term) t[*options.hypergrad.negate_term] *= -1;
  for (HypergradTerm k : kAllHypergradTerms) require_finite(t[k], "hypergradient term");
  return t;
}

void step_arch(TrilevelState& state, const Vector& hypergrad) {
  if (hypergrad.size() != state.a.size()) throw ShapeError("step_arch: hypergradient does not match A");
  state.opt_a.step(state.a, hypergrad);
}

IterationRecord trilevel_iteration(TrilevelProblem& problem, TrilevelState& state, const TrilevelOptions& options) {
  const WeightingConfig& cfg = options.weighting;
  const bool second = options.hypergrad.mode == HypergradMode::kSecondOrder;
  problem.begin_iteration(state.step);
  IterationRecord rec;
  rec.iteration = state.step;
  IterationContext ctx;

  ctx.w1_pre = state.w1;
  rec.loss_w1 = step_w1(problem, state);

  ctx.g_pre = state.g;
  ctx.h_pre = state.h;
  const GanEval gan = step_gan(problem, state);
  rec.loss_gan_g = gan.generator_objective;
  rec.loss_gan_h = gan.objective;

  ctx.class_losses = problem.class_losses(state.a, state.w1, second && cfg.lambda != 0);
  ctx.class_weights = class_weights(ctx.class_losses.l, cfg);
  rec.class_losses = ctx.class_losses.l.values;

  ctx.w2_pre = state.w2;
  const W2Step w2 = step_w2(problem, state, ctx.class_losses.l, cfg);
  rec.loss_w2_real = w2.real;
  rec.loss_w2_synth = w2.synthetic;

  rec.terms = hypergradient(problem, state, ctx, options);
  rec.val_loss = rec.terms.val_loss;
  const Vector total = rec.terms.total();
  rec.grad_norm_a = total.norm();
  step_arch(state, total);

  if (!state.all_finite()) throw NonFiniteError("trilevel: state became non-finite at step " + std::to_string(state.step));
  ++state.step;
  return rec;
}

}  // namespace lfm
