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

#include <doctest.h>

#include <cmath>
#include <random>

#include "lfm/oracle.hpp"
#include "lfm/trilevel.hpp"

using namespace lfm;

namespace {

Vector vec(std::initializer_list<Scalar> values) {
  Vector v(static_cast<Index>(values.size()));
  Index i = 0;
  for (Scalar x : values) v[i++] = x;
  return v;
}

QuadraticForm<Scalar> linear_form(Vector b, Scalar c = 0) {
  QuadraticForm<Scalar> f;
  f.M = Matrix::Zero(b.size(), b.size());
  f.b = std::move(b);
  f.c = c;
  return f;
}

// One scalar per variable. L_tr = 2w (or (w-1)^2 via `train`), S_0 = 1.5w,
// l_0 = 1, and the rest constant.
QuadraticTrilevelProblem scalar_problem(QuadraticForm<Scalar> train) {
  QuadraticDims d{1, 1, 1, 1, 1};
  return QuadraticTrilevelProblem(d, std::move(train), linear_form(vec({0, 1})), {linear_form(vec({0, 0}), 1)},
                                  {linear_form(vec({0, 1.5, 0}))}, linear_form(vec({0, 0, 0})));
}

TrilevelState state_for(const TrilevelProblem& p, const TrilevelOptions& o, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const ProblemDims d = p.dims();
  return TrilevelState::create(random_vector<Scalar>(d.arch, 1, rng), random_vector<Scalar>(d.w, 1, rng),
                               random_vector<Scalar>(d.w, 1, rng), random_vector<Scalar>(d.g, 1, rng),
                               random_vector<Scalar>(d.h, 1, rng), o);
}

// (J u) . w by central differences of the update, against u . (J^T w).
void check_step_jacobian(const OptimizerConfig& cfg, const Vector& grad, Index warmup) {
  std::mt19937_64 rng(17);
  const Index n = grad.size();
  Optimizer opt(cfg);
  Vector x = random_vector<Scalar>(n, 1, rng);
  for (Index i = 0; i < warmup; ++i) opt.step(x, random_vector<Scalar>(n, 1, rng));
  const Optimizer before = opt;
  const Vector x0 = x;
  opt.step(x, grad);
  const Vector u = random_vector<Scalar>(n, 1, rng), w = random_vector<Scalar>(n, 1, rng);
  const Vector jtw = opt.step_jacobian_t(w);

  const Scalar h = 1e-6;
  auto delta = [&](const Vector& g) {
    Optimizer o = before;
    Vector y = x0;
    o.step(y, g);
    return Vector(x0 - y);
  };
  const Vector ju = (delta(grad + h * u) - delta(grad - h * u)) / (2 * h);
  CHECK(ju.dot(w) == doctest::Approx(u.dot(jtw)).epsilon(1e-6));
}

}  // namespace

TEST_CASE("plain step on (w - 1)^2 from 0 lands on 0.2") {
  QuadraticForm<Scalar> train;
  train.M = Matrix::Zero(2, 2);
  train.M(1, 1) = 2;
  train.b = vec({0, -2});
  train.c = 1;
  const QuadraticTrilevelProblem p = scalar_problem(train);
  TrilevelState s = TrilevelState::create(vec({0}), vec({0}), vec({0}), vec({0}), vec({0}),
                                          TrilevelOptions::plain(0.1, 0.1, 0, 0, 0));
  CHECK(step_w1(p, s) == doctest::Approx(1.0));
  CHECK(s.w1[0] == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("W2 step combines real and weighted synthetic gradients") {
  const QuadraticTrilevelProblem p = scalar_problem(linear_form(vec({0, 2})));
  TrilevelState s = TrilevelState::create(vec({0}), vec({0}), vec({0}), vec({0}), vec({0}),
                                          TrilevelOptions::plain(0.1, 0.1, 0, 0, 0));
  const ClassLossVector l = p.class_losses(s.a, s.w1, false).l;
  step_w2(p, s, l, WeightingConfig{});
  CHECK(s.w2[0] == doctest::Approx(-0.35).epsilon(1e-14));

  WeightingConfig only;
  only.synthetic_only = true;
  TrilevelState t = TrilevelState::create(vec({0}), vec({0}), vec({0}), vec({0}), vec({0}),
                                          TrilevelOptions::plain(0.1, 0.1, 0, 0, 0));
  step_w2(p, t, l, only);
  CHECK(t.w2[0] == doctest::Approx(-0.15).epsilon(1e-14));
}

TEST_CASE("zero rates leave every variable unchanged") {
  QuadraticTrilevelProblem p = QuadraticTrilevelProblem::random({}, 3);
  const TrilevelOptions o = TrilevelOptions::plain(0, 0, 0, 0, 0);
  TrilevelState s = state_for(p, o, 4);
  const TrilevelState before = s;
  for (int i = 0; i < 3; ++i) trilevel_iteration(p, s, o);
  CHECK(s.a == before.a);
  CHECK(s.w1 == before.w1);
  CHECK(s.w2 == before.w2);
  CHECK(s.g == before.g);
  CHECK(s.h == before.h);
}

TEST_CASE("lambda = 0 turns the W2 step into the W1 step") {
  QuadraticTrilevelProblem p = QuadraticTrilevelProblem::random({4, 6, 3, 2, 3}, 8);
  const TrilevelOptions o = TrilevelOptions::plain(0.1, 0.1, 0.1, 0.1, 0);
  for (bool plain : {true, false}) {
    TrilevelOptions opt = o;
    if (!plain) opt = TrilevelOptions{};
    opt.weighting.lambda = 0;
    TrilevelState s = state_for(p, opt, 9);
    s.w2 = s.w1;
    const ClassLossVector l = p.class_losses(s.a, s.w1, false).l;
    step_w1(p, s);
    const W2Step r = step_w2(p, s, l, opt.weighting);
    CHECK(s.w2 == s.w1);
    CHECK(r.synthetic == 0);
  }
}

TEST_CASE("lambda = 0 zeroes the synthetic and generator terms exactly") {
  QuadraticTrilevelProblem p = QuadraticTrilevelProblem::random({5, 5, 4, 3, 4}, 21);
  for (Scalar lambda : {0.0, 1.0}) {
    TrilevelOptions o = TrilevelOptions::plain(0.1, 0.1, 0.1, 0.1, 0.01);
    o.weighting.lambda = lambda;
    TrilevelState s = state_for(p, o, 22);
    const IterationRecord r = trilevel_iteration(p, s, o);
    const bool zero = lambda == 0;
    CHECK((r.terms.w2_synthetic.array() == 0).all() == zero);
    CHECK((r.terms.w2_class_coupling.array() == 0).all() == zero);
    CHECK((r.terms.w1_path.array() == 0).all() == zero);
    CHECK((r.terms.generator_path.array() == 0).all() == zero);
    CHECK(r.terms.w2_train.norm() > 0);
  }
}

TEST_CASE("first and second order agree when the inner rates vanish") {
  QuadraticTrilevelProblem p = QuadraticTrilevelProblem::random({6, 4, 3, 2, 3}, 31);
  for (Scalar lambda : {0.0, 2.0}) {
    TrilevelOptions o = TrilevelOptions::plain(0, 0, 0, 0.1, 0.01);
    o.weighting.lambda = lambda;
    TrilevelState s1 = state_for(p, o, 32);
    TrilevelState s2 = s1;
    TrilevelOptions first = o;
    first.hypergrad.mode = HypergradMode::kFirstOrder;
    const IterationRecord r1 = trilevel_iteration(p, s1, first);
    const IterationRecord r2 = trilevel_iteration(p, s2, o);
    CHECK((r1.terms.total() - r2.terms.total()).norm() <= 1e-9);
    CHECK((s1.a - s2.a).norm() <= 1e-9);
  }
}

TEST_CASE("first order keeps only the direct term") {
  QuadraticTrilevelProblem p = QuadraticTrilevelProblem::random({}, 41);
  TrilevelOptions o = TrilevelOptions::plain(0.1, 0.1, 0.1, 0.1, 0.01);
  o.hypergrad.mode = HypergradMode::kFirstOrder;
  TrilevelState s = state_for(p, o, 42);
  const IterationRecord r = trilevel_iteration(p, s, o);
  CHECK(r.terms.total() == r.terms.direct);
  CHECK(r.terms.direct.norm() > 0);
}

TEST_CASE("negated term flips exactly one contribution") {
  QuadraticTrilevelProblem p = QuadraticTrilevelProblem::random({}, 51);
  const TrilevelOptions o = TrilevelOptions::plain(0.1, 0.1, 0.1, 0.1, 0);
  const UnrollPoint at{vec({0.1, -0.2, 0.3}), vec({1, 0, 0, -1}), vec({0, 1, 0, 1}), vec({0.5, 0.5, 0}),
                       vec({0, 1})};
  const UnrollRates rates{0.1, 0.1, 0.1, 0.1};
  const HypergradTerms base = pipeline_hypergrad(p, at, rates, o.weighting, o.hypergrad);
  for (HypergradTerm k : kAllHypergradTerms) {
    HypergradOptions h = o.hypergrad;
    h.negate_term = k;
    const HypergradTerms t = pipeline_hypergrad(p, at, rates, o.weighting, h);
    for (HypergradTerm j : kAllHypergradTerms) {
      CHECK(t[j] == (j == k ? Vector(-base[j]) : base[j]));
    }
  }
}

TEST_CASE("each indirect term scales linearly in its leading step size") {
  QuadraticTrilevelProblem p = QuadraticTrilevelProblem::random({4, 5, 3, 2, 3}, 57);
  std::mt19937_64 rng(58);
  const UnrollPoint at{random_vector<Scalar>(4, 1, rng), random_vector<Scalar>(5, 1, rng),
                       random_vector<Scalar>(5, 1, rng), random_vector<Scalar>(3, 1, rng),
                       random_vector<Scalar>(2, 1, rng)};
  const WeightingConfig cfg;
  struct Case {
    HypergradTerm term;
    Scalar UnrollRates::*rate;
  };
  for (const Case& c : {Case{HypergradTerm::kW2Train, &UnrollRates::w2}, Case{HypergradTerm::kW2Synthetic, &UnrollRates::w2},
                        Case{HypergradTerm::kW2ClassCoupling, &UnrollRates::w2}, Case{HypergradTerm::kW1Path, &UnrollRates::w1},
                        Case{HypergradTerm::kGeneratorPath, &UnrollRates::g}}) {
    UnrollRates rates{0.1, 0.1, 0.1, 0.1};
    rates.*c.rate = 1e-3;
    const Vector full = pipeline_hypergrad(p, at, rates, cfg, HypergradOptions{})[c.term];
    rates.*c.rate = 5e-4;
    const Vector half = pipeline_hypergrad(p, at, rates, cfg, HypergradOptions{})[c.term];
    INFO("term " << term_name(c.term));
    REQUIRE(full.norm() > 0);
    CHECK((full - 2 * half).norm() <= 1e-2 * full.norm());
  }
}

TEST_CASE("optimizer jacobians match finite differences") {
  std::mt19937_64 rng(5);
  const Vector g = random_vector<Scalar>(6, 1, rng);
  SUBCASE("plain") { check_step_jacobian(OptimizerConfig::plain(0.3), g, 0); }
  SUBCASE("momentum and weight decay") { check_step_jacobian(OptimizerConfig::sgd(0.1, 0.9, 3e-4, 0), g, 3); }
  SUBCASE("clipped") { check_step_jacobian(OptimizerConfig::sgd(0.1, 0.9, 3e-4, 0.5), g, 2); }
  SUBCASE("adam first step") { check_step_jacobian(OptimizerConfig::adam(0.01, 0.5, 0.999, 0), g, 0); }
  SUBCASE("adam with history") { check_step_jacobian(OptimizerConfig::adam(0.01, 0.5, 0.999, 1e-3), g, 5); }
  SUBCASE("clipped adam") {
    OptimizerConfig c = OptimizerConfig::adam(0.01, 0.9, 0.999, 0);
    c.clip_norm = 0.3;
    check_step_jacobian(c, g, 4);
  }
}

TEST_CASE("sgd momentum and clipping follow the usual conventions") {
  Optimizer opt(OptimizerConfig::sgd(0.1, 0.9, 0, 1));
  Vector x = vec({0, 0});
  CHECK(opt.step(x, vec({3, 4})) == doctest::Approx(5));
  CHECK(x[0] == doctest::Approx(-0.06));
  CHECK(x[1] == doctest::Approx(-0.08));
  opt.step(x, vec({0.3, 0.4}));
  // buffer = 0.9 * (0.6, 0.8) + (0.3, 0.4)
  CHECK(x[0] == doctest::Approx(-0.06 - 0.1 * 0.84));
  CHECK(x[1] == doctest::Approx(-0.08 - 0.1 * 1.12));
  CHECK_THROWS_AS(opt.step(x, vec({NAN, 0})), NonFiniteError);
}

TEST_CASE("architecture step with a zero rate is the identity") {
  TrilevelOptions o = TrilevelOptions{};
  o.rates.a = 0;
  TrilevelState s = TrilevelState::create(vec({1, -2, 3}), vec({0}), vec({0}), vec({0}), vec({0}), o);
  step_arch(s, vec({5, 5, 5}));
  CHECK(s.a == vec({1, -2, 3}));
  CHECK_THROWS_AS(step_arch(s, vec({1, 1})), ShapeError);
}

TEST_CASE("zero hypergradient only shrinks A through weight decay") {
  TrilevelOptions o = TrilevelOptions{};
  TrilevelState s = TrilevelState::create(vec({1, -2, 0.5}), vec({0}), vec({0}), vec({0}), vec({0}), o);
  const Vector a0 = s.a;
  step_arch(s, Vector::Zero(3));
  for (Index i = 0; i < 3; ++i) {
    CHECK(std::abs(s.a[i]) < std::abs(a0[i]));
    CHECK(s.a[i] * a0[i] > 0);
  }
  o.arch_optimizer.weight_decay = 0;
  TrilevelState t = TrilevelState::create(a0, vec({0}), vec({0}), vec({0}), vec({0}), o);
  step_arch(t, Vector::Zero(3));
  CHECK(t.a == a0);
}

TEST_CASE("repeated architecture steps minimize a convex quadratic") {
  std::mt19937_64 rng(61);
  const Matrix q = random_spd<Scalar>(4, 0.5, 2, rng);
  const Vector b = random_vector<Scalar>(4, 1, rng);
  const Vector target = q.ldlt().solve(-b);
  TrilevelOptions o = TrilevelOptions{};
  o.rates.a = 0.001;
  o.arch_optimizer.weight_decay = 0;
  TrilevelState s = TrilevelState::create(Vector::Zero(4), vec({0}), vec({0}), vec({0}), vec({0}), o);
  for (int i = 0; i < 20000; ++i) step_arch(s, Vector(q * s.a + b));
  CHECK((s.a - target).norm() <= 1e-4);
}

TEST_CASE("cosine schedule runs from the initial rate to the floor") {
  CHECK(cosine_rate(0.025, 0.001, 0, 10) == doctest::Approx(0.025));
  CHECK(cosine_rate(0.025, 0.001, 5, 10) == doctest::Approx(0.013));
  CHECK(cosine_rate(0.025, 0.001, 10, 10) == doctest::Approx(0.001));
  TrilevelOptions o;
  TrilevelState s = TrilevelState::create(vec({0}), vec({0}), vec({0}), vec({0}), vec({0}), o);
  apply_schedule(s, o, 5, 10);
  CHECK(s.opt_w1.lr() == doctest::Approx(0.013));
  CHECK(s.opt_w2.lr() == doctest::Approx(0.013));
  CHECK(s.opt_g.lr() == doctest::Approx(2e-4));
  CHECK(s.opt_a.lr() == doctest::Approx(3e-4));
}

TEST_CASE("the loop reduces validation loss on a quadratic problem") {
  QuadraticTrilevelProblem p = QuadraticTrilevelProblem::random({4, 5, 3, 2, 3}, 71);
  // Normalized weights keep the W2 curvature bounded for a stable rate.
  TrilevelOptions o = TrilevelOptions::plain(0.2, 0.1, 0.05, 0.05, 0.01);
  o.weighting.normalize_weights = true;
  TrilevelState s = state_for(p, o, 72);
  Scalar first = 0, last = 0;
  for (int i = 0; i < 2000; ++i) {
    const IterationRecord r = trilevel_iteration(p, s, o);
    if (i == 0) first = r.val_loss;
    last = r.val_loss;
    REQUIRE(std::isfinite(r.val_loss));
  }
  CHECK(last < first);
  CHECK(s.step == 2000);
}

TEST_CASE("mode and term names round-trip") {
  CHECK(parse_hypergrad_mode(hypergrad_mode_name(HypergradMode::kFirstOrder)) == HypergradMode::kFirstOrder);
  CHECK(parse_hypergrad_mode("second_order") == HypergradMode::kSecondOrder);
  CHECK_THROWS_AS(parse_hypergrad_mode("third"), ValidationError);
  CHECK(term_name(HypergradTerm::kGeneratorPath) == "generator_path");
  CHECK(parse_optimizer(optimizer_name(OptimizerKind::kAdam)) == OptimizerKind::kAdam);
}
