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

#include "lfm/oracle.hpp"

#include <cmath>

namespace lfm {
namespace {

Vector cat(std::initializer_list<const Vector*> parts) {
  Index n = 0;
  for (const Vector* p : parts) n += p->size();
  Vector out(n);
  Index at = 0;
  for (const Vector* p : parts) {
    out.segment(at, p->size()) = *p;
    at += p->size();
  }
  return out;
}

QuadraticForm<Scalar> random_form(Index n, std::mt19937_64& rng) {
  QuadraticForm<Scalar> f;
  f.M = random_spd<Scalar>(n, 0.5, 2, rng);
  f.b = random_vector<Scalar>(n, 1, rng);
  return f;
}

// Shifts c so the form's minimum is at least 0.1, like a loss.
void make_positive(QuadraticForm<Scalar>& f, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  f.c = Scalar(0.5) * f.b.dot(f.M.completeOrthogonalDecomposition().solve(f.b)) + Scalar(u(rng));
}

// Zeroes the off-diagonal blocks between the first `na` variables and the rest.
void decouple(QuadraticForm<Scalar>& f, Index na) {
  const Index rest = f.size() - na;
  f.M.topRightCorner(na, rest).setZero();
  f.M.bottomLeftCorner(rest, na).setZero();
}

}  // namespace

void QuadraticDims::validate() const {
  for (Index d : {arch, w, g, h}) {
    if (d < 1 || d > 10) throw ValidationError("quadratic problem: dimensions must lie in [1, 10]");
  }
  if (classes < 1 || classes > 10) throw ValidationError("quadratic problem: classes must lie in [1, 10]");
}

QuadraticTrilevelProblem::QuadraticTrilevelProblem(QuadraticDims dims, QuadraticForm<Scalar> train,
                                                   QuadraticForm<Scalar> val,
                                                   std::vector<QuadraticForm<Scalar>> class_loss,
                                                   std::vector<QuadraticForm<Scalar>> synthetic,
                                                   QuadraticForm<Scalar> gan)
    : dims_(dims),
      train_(std::move(train)),
      val_(std::move(val)),
      class_loss_(std::move(class_loss)),
      synthetic_(std::move(synthetic)),
      gan_(std::move(gan)) {
  dims_.validate();
  const Index aw = dims_.arch + dims_.w;
  if (train_.size() != aw || val_.size() != aw) throw ShapeError("quadratic problem: L_tr/L_val act on [A, W]");
  if (static_cast<Index>(class_loss_.size()) != dims_.classes ||
      static_cast<Index>(synthetic_.size()) != dims_.classes) {
    throw ShapeError("quadratic problem: one l_c and one S_c per class");
  }
  for (const auto& f : class_loss_) {
    if (f.size() != aw) throw ShapeError("quadratic problem: l_c acts on [A, W]");
  }
  for (const auto& f : synthetic_) {
    if (f.size() != aw + dims_.g) throw ShapeError("quadratic problem: S_c acts on [A, W, G]");
  }
  if (gan_.size() != dims_.arch + dims_.g + dims_.h) throw ShapeError("quadratic problem: L_gan acts on [A, G, H]");
}

QuadraticTrilevelProblem QuadraticTrilevelProblem::random(const QuadraticDims& dims, std::uint64_t seed,
                                                          bool decoupled) {
  dims.validate();
  std::mt19937_64 rng(seed);
  const Index na = dims.arch, aw = dims.arch + dims.w;
  QuadraticForm<Scalar> train = random_form(aw, rng);
  QuadraticForm<Scalar> val = random_form(aw, rng);
  std::vector<QuadraticForm<Scalar>> lc, syn;
  for (Index c = 0; c < dims.classes; ++c) {
    lc.push_back(random_form(aw, rng));
    make_positive(lc.back(), rng);
    syn.push_back(random_form(aw + dims.g, rng));
    make_positive(syn.back(), rng);
  }
  // [A, G] convex, H concave, with a moderate cross block.
  const Index nag = dims.arch + dims.g, n = nag + dims.h;
  QuadraticForm<Scalar> gan;
  gan.M = Matrix::Zero(n, n);
  gan.M.topLeftCorner(nag, nag) = random_spd<Scalar>(nag, 0.5, 2, rng);
  gan.M.bottomRightCorner(dims.h, dims.h) = -random_spd<Scalar>(dims.h, 0.5, 2, rng);
  Matrix cross(nag, dims.h);
  for (Index i = 0; i < cross.size(); ++i) cross.data()[i] = random_vector<Scalar>(1, 0.3, rng)[0];
  gan.M.topRightCorner(nag, dims.h) = cross;
  gan.M.bottomLeftCorner(dims.h, nag) = cross.transpose();
  gan.b = random_vector<Scalar>(n, 1, rng);
  if (decoupled) {
    for (auto* f : {&train, &val}) decouple(*f, na);
    // l_c must not see A at all, or the class weights would carry it.
    for (auto& f : lc) {
      decouple(f, na);
      f.M.topLeftCorner(na, na).setZero();
      f.b.head(na).setZero();
      make_positive(f, rng);
    }
    for (auto& f : syn) decouple(f, na);
    decouple(gan, na);
  }
  return QuadraticTrilevelProblem(dims, std::move(train), std::move(val), std::move(lc), std::move(syn),
                                  std::move(gan));
}

ProblemDims QuadraticTrilevelProblem::dims() const {
  return {dims_.arch, dims_.w, dims_.g, dims_.h, dims_.classes};
}

LossGrad QuadraticTrilevelProblem::train_loss(const Vector& a, const Vector& w, unsigned need) const {
  const Vector x = cat({&a, &w});
  LossGrad out;
  out.value = train_.value(x);
  const Vector g = train_.grad(x);
  if (need & kNeedArch) out.d_arch = g.head(dims_.arch);
  if (need & kNeedW) out.d_w = g.tail(dims_.w);
  return out;
}

LossGrad QuadraticTrilevelProblem::val_loss(const Vector& a, const Vector& w, unsigned need) const {
  const Vector x = cat({&a, &w});
  LossGrad out;
  out.value = val_.value(x);
  const Vector g = val_.grad(x);
  if (need & kNeedArch) out.d_arch = g.head(dims_.arch);
  if (need & kNeedW) out.d_w = g.tail(dims_.w);
  return out;
}

ClassLossGrads QuadraticTrilevelProblem::class_losses(const Vector& a, const Vector& w1, bool want_grads) const {
  const Vector x = cat({&a, &w1});
  ClassLossGrads out;
  out.l.values.resize(dims_.classes);
  out.l.counts.assign(static_cast<std::size_t>(dims_.classes), 1);
  out.l.present.assign(static_cast<std::size_t>(dims_.classes), true);
  for (Index c = 0; c < dims_.classes; ++c) {
    const auto& f = class_loss_[static_cast<std::size_t>(c)];
    out.l.values[c] = f.value(x);
    if (want_grads) {
      const Vector g = f.grad(x);
      out.d_arch.push_back(g.head(dims_.arch));
      out.d_w.push_back(g.tail(dims_.w));
    }
  }
  return out;
}

SyntheticEval QuadraticTrilevelProblem::synthetic_loss(const Vector& a, const Vector& w2, const Vector& g,
                                                       const Vector& weights, unsigned need) const {
  if (weights.size() != dims_.classes) throw ShapeError("synthetic loss: one weight per class");
  const Vector x = cat({&a, &w2, &g});
  SyntheticEval out;
  out.class_values.resize(dims_.classes);
  Vector grad = Vector::Zero(x.size());
  for (Index c = 0; c < dims_.classes; ++c) {
    const auto& f = synthetic_[static_cast<std::size_t>(c)];
    out.class_values[c] = f.value(x);
    if (weights[c] != 0) grad += weights[c] * f.grad(x);
  }
  out.value = weights.dot(out.class_values);
  if (need & kNeedArch) out.d_arch = grad.head(dims_.arch);
  if (need & kNeedW) out.d_w = grad.segment(dims_.arch, dims_.w);
  if (need & kNeedG) out.d_g = grad.tail(dims_.g);
  return out;
}

GanEval QuadraticTrilevelProblem::gan(const Vector& a, const Vector& g, const Vector& h, unsigned need) const {
  const Vector x = cat({&a, &g, &h});
  GanEval out;
  out.objective = gan_.value(x);
  out.generator_objective = out.objective;
  const Vector grad = gan_.grad(x);
  if (need & kNeedArch) out.d_arch = grad.head(dims_.arch);
  if (need & kNeedG) out.d_g = grad.segment(dims_.arch, dims_.g);
  if (need & kNeedH) out.d_h = grad.tail(dims_.h);
  return out;
}

HypergradTerms analytic_quadratic_hypergrad(const QuadraticTrilevelProblem& p, const UnrollPoint& at,
                                            const UnrollRates& rates, const WeightingConfig& cfg) {
  const QuadraticDims& d = p.quadratic_dims();
  const Index na = d.arch, nw = d.w, ng = d.g, C = d.classes;
  const Vector& a = at.a;

  // Hessian blocks; block(f, r0, rn, c0, cn) = d^2 f / dx_r dx_c.
  auto block = [](const QuadraticForm<Scalar>& f, Index r0, Index rn, Index c0, Index cn) {
    return Matrix(f.M.block(r0, c0, rn, cn));
  };
  auto grad_of = [](const QuadraticForm<Scalar>& f, std::initializer_list<const Vector*> parts) {
    return f.grad(cat(parts));
  };

  // Forward pass with plain steps.
  const Vector w1n = at.w1 - rates.w1 * Vector(grad_of(p.train(), {&a, &at.w1}).tail(nw));
  const Vector gn = at.g - rates.g * Vector(grad_of(p.gan_form(), {&a, &at.g, &at.h}).segment(na, ng));
  Vector l(C);
  for (Index c = 0; c < C; ++c) l[c] = p.class_loss(c).value(cat({&a, &w1n}));
  // Class-weight Jacobian dw/dl, written out for both weighting modes.
  Matrix jw = Matrix::Zero(C, C);
  Vector w(C);
  if (!cfg.normalize_weights) {
    w = cfg.lambda * l;
    jw.diagonal().setConstant(cfg.lambda);
  } else {
    const Scalar mean = l.mean();
    w = cfg.lambda * l / mean;
    jw = cfg.lambda * (Matrix::Identity(C, C) / mean - l * Vector::Ones(C).transpose() / (Scalar(C) * mean * mean));
  }
  Vector step = Vector::Zero(nw);
  if (!cfg.synthetic_only) step += grad_of(p.train(), {&a, &at.w2}).tail(nw);
  if (cfg.lambda != 0) {
    for (Index c = 0; c < C; ++c) step += w[c] * Vector(grad_of(p.synthetic(c), {&a, &at.w2, &gn}).segment(na, nw));
  }
  const Vector w2n = at.w2 - rates.w2 * step;

  HypergradTerms t = HypergradTerms::zeros(na);
  const Vector gval = grad_of(p.val(), {&a, &w2n});
  t.val_loss = p.val().value(cat({&a, &w2n}));
  t.direct = gval.head(na);
  const Vector v = gval.tail(nw);

  // dW1'/dA and dG'/dA
  const Matrix dw1 = -rates.w1 * block(p.train(), na, nw, 0, na);
  const Matrix dg = -rates.g * block(p.gan_form(), na, ng, 0, na);

  if (!cfg.synthetic_only) t.w2_train = -rates.w2 * block(p.train(), 0, na, na, nw) * v;
  if (cfg.lambda != 0) {
    Vector s(C);
    Vector mixed_g = Vector::Zero(ng);
    for (Index c = 0; c < C; ++c) {
      const QuadraticForm<Scalar>& sc = p.synthetic(c);
      t.w2_synthetic -= rates.w2 * w[c] * block(sc, 0, na, na, nw) * v;
      s[c] = rates.w2 * grad_of(sc, {&a, &at.w2, &gn}).segment(na, nw).dot(v);
      mixed_g += w[c] * block(sc, na + nw, ng, na, nw) * v;
    }
    // dl_c/dA = grad_A l_c + dW1'^T grad_W l_c at (A, W1')
    const Vector r = jw.transpose() * s;
    for (Index c = 0; c < C; ++c) {
      const Vector gl = grad_of(p.class_loss(c), {&a, &w1n});
      t.w2_class_coupling -= r[c] * gl.head(na);
      t.w1_path -= r[c] * (dw1.transpose() * gl.tail(nw));
    }
    t.generator_path = -rates.w2 * dg.transpose() * mixed_g;
  }
  return t;
}

Scalar unrolled_val_loss(const TrilevelProblem& p, const UnrollPoint& at, const UnrollRates& rates,
                         const WeightingConfig& cfg) {
  const Vector w1n = at.w1 - rates.w1 * p.train_loss(at.a, at.w1, kNeedW).d_w;
  const Vector gn = at.g - rates.g * p.gan(at.a, at.g, at.h, kNeedG).d_g;
  Vector step = Vector::Zero(at.w2.size());
  if (!cfg.synthetic_only) step += p.train_loss(at.a, at.w2, kNeedW).d_w;
  if (cfg.lambda != 0) {
    const ClassLossGrads cl = p.class_losses(at.a, w1n, false);
    step += p.synthetic_loss(at.a, at.w2, gn, class_weights(cl.l, cfg), kNeedW).d_w;
  }
  const Vector w2n = at.w2 - rates.w2 * step;
  const Scalar value = p.val_loss(at.a, w2n, kNeedNone).value;
  if (!std::isfinite(value)) throw NonFiniteError("unrolled pipeline produced a non-finite loss");
  return value;
}

Vector unrolled_hypergrad_fd(const TrilevelProblem& p, const UnrollPoint& at, const UnrollRates& rates,
                             const WeightingConfig& cfg, Scalar eps) {
  if (!(eps > 0)) throw ValidationError("unrolled finite differences: eps must be positive");
  Vector grad(at.a.size());
  UnrollPoint probe = at;
  for (Index i = 0; i < at.a.size(); ++i) {
    probe.a[i] = at.a[i] + eps;
    const Scalar plus = unrolled_val_loss(p, probe, rates, cfg);
    probe.a[i] = at.a[i] - eps;
    const Scalar minus = unrolled_val_loss(p, probe, rates, cfg);
    probe.a[i] = at.a[i];
    grad[i] = (plus - minus) / (2 * eps);
  }
  return grad;
}

Vector unrolled_hypergrad_fd_extrapolated(const TrilevelProblem& p, const UnrollPoint& at, const UnrollRates& rates,
                                          const WeightingConfig& cfg, Scalar eps) {
  const Vector coarse = unrolled_hypergrad_fd(p, at, rates, cfg, eps);
  const Vector fine = unrolled_hypergrad_fd(p, at, rates, cfg, eps / 2);
  return (4 * fine - coarse) / 3;
}

HypergradTerms pipeline_hypergrad(const TrilevelProblem& p, const UnrollPoint& at, const UnrollRates& rates,
                                  const WeightingConfig& cfg, const HypergradOptions& options) {
  TrilevelOptions opt = TrilevelOptions::plain(rates.w1, rates.w2, rates.g, rates.h, 0);
  opt.weighting = cfg;
  opt.hypergrad = options;
  TrilevelState s = TrilevelState::create(at.a, at.w1, at.w2, at.g, at.h, opt);
  IterationContext ctx;
  ctx.w1_pre = s.w1;
  step_w1(p, s);
  ctx.g_pre = s.g;
  ctx.h_pre = s.h;
  step_gan(p, s);
  ctx.class_losses = p.class_losses(s.a, s.w1, options.mode == HypergradMode::kSecondOrder && cfg.lambda != 0);
  ctx.class_weights = class_weights(ctx.class_losses.l, cfg);
  ctx.w2_pre = s.w2;
  step_w2(p, s, ctx.class_losses.l, cfg);
  return hypergradient(p, s, ctx, opt);
}

QuadraticInstance random_quadratic_instance(std::uint64_t seed, bool decoupled) {
  std::mt19937_64 rng(seed * 7919 + 1);
  std::uniform_int_distribution<Index> dim(1, 10), classes(1, 6);
  std::uniform_real_distribution<double> rate(0.01, 0.3), lambda(0.25, 3);
  QuadraticDims d{dim(rng), dim(rng), dim(rng), dim(rng), classes(rng)};
  QuadraticInstance in{QuadraticTrilevelProblem::random(d, seed, decoupled), {}, {}, {}};
  in.at = {random_vector<Scalar>(d.arch, 1, rng), random_vector<Scalar>(d.w, 1, rng),
           random_vector<Scalar>(d.w, 1, rng), random_vector<Scalar>(d.g, 1, rng),
           random_vector<Scalar>(d.h, 1, rng)};
  in.rates = {Scalar(rate(rng)), Scalar(rate(rng)), Scalar(rate(rng)), Scalar(rate(rng))};
  in.cfg.lambda = Scalar(lambda(rng));
  in.cfg.normalize_weights = seed % 2 == 1;
  in.cfg.synthetic_only = seed % 5 == 4;
  return in;
}

Scalar relative_error(const Vector& a, const Vector& b, Scalar floor) {
  return (a - b).norm() / std::max(b.norm(), floor);
}

}  // namespace lfm
