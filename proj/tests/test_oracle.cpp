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

#include <random>

#include "lfm/oracle.hpp"

using namespace lfm;

namespace {

using Instance = QuadraticInstance;

Instance random_instance(std::uint64_t seed, bool decoupled = false) { return random_quadratic_instance(seed, decoupled); }

}  // namespace

TEST_CASE("random quadratic problems are well formed") {
  const QuadraticTrilevelProblem p = QuadraticTrilevelProblem::random({3, 4, 3, 2, 3}, 1);
  auto eigen_range = [](const Matrix& m) {
    const Eigen::SelfAdjointEigenSolver<Matrix> es(m);
    return std::pair{es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
  };
  for (const Matrix* m : {&p.train().M, &p.val().M, &p.class_loss(0).M, &p.synthetic(2).M}) {
    const auto [lo, hi] = eigen_range(*m);
    CHECK(lo >= 0.5 - 1e-12);
    CHECK(hi <= 2 + 1e-12);
  }
  // Convex in [A, G], concave in H.
  CHECK(eigen_range(p.gan_form().M.topLeftCorner(6, 6)).first > 0);
  CHECK(eigen_range(p.gan_form().M.bottomRightCorner(2, 2)).second < 0);
  // Class losses stay positive everywhere.
  std::mt19937_64 rng(2);
  for (int i = 0; i < 50; ++i) {
    const ClassLossGrads l = p.class_losses(random_vector<Scalar>(3, 3, rng), random_vector<Scalar>(4, 3, rng), false);
    CHECK(l.l.values.minCoeff() >= 0.1);
  }
  CHECK_THROWS_AS(QuadraticTrilevelProblem::random({11, 1, 1, 1, 1}, 0), ValidationError);
}

TEST_CASE("analytic hypergradient matches unrolled finite differences") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Instance in = random_instance(seed);
    const Vector analytic = analytic_quadratic_hypergrad(in.problem, in.at, in.rates, in.cfg).total();
    // Some instances have |grad| ~ 1e-3 next to a loss of order 1, beyond
    // plain central differences at this tolerance.
    const Vector fd = unrolled_hypergrad_fd_extrapolated(in.problem, in.at, in.rates, in.cfg, 1e-3);
    INFO("seed " << seed);
    CHECK(relative_error(fd, analytic) <= 1e-8);
  }
}

TEST_CASE("pipeline hypergradient matches the analytic one on 100 problems") {
  HypergradOptions h;
  for (std::uint64_t seed = 100; seed < 220; ++seed) {
    const Instance in = random_instance(seed);
    const HypergradTerms exact = analytic_quadratic_hypergrad(in.problem, in.at, in.rates, in.cfg);
    const HypergradTerms got = pipeline_hypergrad(in.problem, in.at, in.rates, in.cfg, h);
    INFO("seed " << seed);
    CHECK(relative_error(got.total(), exact.total()) <= 1e-6);
    // Term by term, relative to the total so vanishing terms do not blow up.
    for (HypergradTerm k : kAllHypergradTerms) {
      INFO("term " << term_name(k));
      CHECK((got[k] - exact[k]).norm() <= 1e-6 * exact.total().norm());
    }
    CHECK(got.val_loss == doctest::Approx(exact.val_loss).epsilon(1e-12));
  }
}

TEST_CASE("decoupled problems reduce to the direct partial") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Instance in = random_instance(seed, true);
    const HypergradTerms got = pipeline_hypergrad(in.problem, in.at, in.rates, in.cfg, HypergradOptions{});
    CHECK(got.total() == got.direct);
    const HypergradTerms exact = analytic_quadratic_hypergrad(in.problem, in.at, in.rates, in.cfg);
    CHECK(exact.total() == exact.direct);
    CHECK(relative_error(got.direct, exact.direct) <= 1e-12);
  }
}

TEST_CASE("halving the finite-difference step cuts its error about fourfold") {
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Instance in = random_instance(seed);
    const Vector exact = analytic_quadratic_hypergrad(in.problem, in.at, in.rates, in.cfg).total();
    const Scalar e1 = (unrolled_hypergrad_fd(in.problem, in.at, in.rates, in.cfg, 0.1) - exact).norm();
    const Scalar e2 = (unrolled_hypergrad_fd(in.problem, in.at, in.rates, in.cfg, 0.05) - exact).norm();
    if (e1 < 1e-10) continue;  // pipeline nearly quadratic in A: nothing to measure
    ++checked;
    INFO("seed " << seed << " errors " << e1 << " " << e2);
    CHECK(e1 / e2 == doctest::Approx(4).epsilon(0.15));
  }
  CHECK(checked >= 5);
}

TEST_CASE("first-order pipeline returns the direct partial of the analytic terms") {
  const Instance in = random_instance(3);
  HypergradOptions h;
  h.mode = HypergradMode::kFirstOrder;
  const HypergradTerms got = pipeline_hypergrad(in.problem, in.at, in.rates, in.cfg, h);
  const HypergradTerms exact = analytic_quadratic_hypergrad(in.problem, in.at, in.rates, in.cfg);
  CHECK(got.total() == got.direct);
  CHECK(relative_error(got.direct, exact.direct) <= 1e-12);
}
