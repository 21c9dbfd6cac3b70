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

#include <cstdio>
#include <map>
#include <ostream>

#include "lfm/gradcheck.hpp"
#include "lfm/harness.hpp"
#include "lfm/oracle.hpp"

namespace lfm {
namespace {

constexpr Scalar kGradTol = Scalar(1e-4);
constexpr Scalar kQuadraticTol = Scalar(1e-6);
constexpr Scalar kUnrolledTol = Scalar(1e-3);

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2e", v);
  return buf;
}

void gradient_checks(std::vector<VerifyCheck>& out) {
  std::map<std::string, std::pair<Scalar, int>> worst;  // op -> (worst error, shapes)
  for (const auto& c : gradcheck::primitive_cases(2026)) {
    const gradcheck::GradCheck r = gradcheck::check_gradients(c.build, c.leaves);
    auto& [err, shapes] = worst[c.op];
    err = std::max(err, r.worst_relative);
    ++shapes;
  }
  for (const auto& [op, w] : worst) {
    const bool ok = w.first <= kGradTol && w.second >= 3;
    out.push_back({"gradcheck " + op, ok, "worst rel " + sci(double(w.first)) + " over " + std::to_string(w.second) +
                                              " shapes"});
  }
}

void quadratic_checks(const VerifyOptions& options, std::vector<VerifyCheck>& out) {
  HypergradOptions h;
  h.negate_term = options.negate_term;
  Scalar worst_total = 0;
  std::map<HypergradTerm, Scalar> worst_term;
  std::map<HypergradTerm, Index> bad_term;
  for (Index i = 0; i < options.quadratic_instances; ++i) {
    const QuadraticInstance in = random_quadratic_instance(options.seed + 100 + static_cast<std::uint64_t>(i));
    const HypergradTerms exact = analytic_quadratic_hypergrad(in.problem, in.at, in.rates, in.cfg);
    const HypergradTerms got = pipeline_hypergrad(in.problem, in.at, in.rates, in.cfg, h);
    worst_total = std::max(worst_total, relative_error(got.total(), exact.total()));
    // Per term, relative to the total so vanishing terms stay meaningful.
    const Scalar scale = std::max(exact.total().norm(), Scalar(1e-12));
    for (HypergradTerm k : kAllHypergradTerms) {
      const Scalar e = (got[k] - exact[k]).norm() / scale;
      worst_term[k] = std::max(worst_term[k], e);
      if (e > kQuadraticTol) ++bad_term[k];
    }
  }
  const std::string n = std::to_string(options.quadratic_instances);
  out.push_back({"quadratic hypergradient total", worst_total <= kQuadraticTol,
                 "worst rel " + sci(double(worst_total)) + " over " + n + " instances"});
  for (HypergradTerm k : kAllHypergradTerms) {
    out.push_back({"quadratic term " + std::string(term_name(k)), bad_term[k] == 0,
                   "worst " + sci(double(worst_term[k])) + ", " + std::to_string(bad_term[k]) + " of " + n +
                       " instances off"});
  }
}

WeightingConfig weighting(Scalar lambda) {
  WeightingConfig w;
  w.lambda = lambda;
  return w;
}

void unrolled_checks(const VerifyOptions& options, std::vector<VerifyCheck>& out) {
  for (Scalar lambda : {Scalar(0), Scalar(1)}) {
    NeuralTrilevelProblem p = make_tiny_problem(weighting(lambda));
    p.begin_iteration(0);
    const TrilevelState s = p.initial_state(TrilevelOptions{}, 1.0);
    const UnrollPoint at{s.a, s.w1, s.w2, s.g, s.h};
    const UnrollRates rates{0.5, 0.5, 0.5, 0.5};
    HypergradOptions h;
    h.negate_term = options.negate_term;
    const HypergradTerms t = pipeline_hypergrad(p, at, rates, p.spec().weighting, h);
    const Vector fd = unrolled_hypergrad_fd(p, at, rates, p.spec().weighting, 1e-4);
    const Scalar err = relative_error(t.total(), fd);
    const Index params = p.dims().w;
    out.push_back({"unrolled tiny network lambda=" + std::to_string(int(lambda)), err <= kUnrolledTol,
                   "rel " + sci(double(err)) + ", " + std::to_string(params) + " weights"});
  }
}

// Exact zeros of the synthetic pathway and the W2 step law, on quadratic
// and neural problems. Runs on plain steps so no GAN state matters.
void lambda_zero_checks(const VerifyOptions& options, std::vector<VerifyCheck>& out) {
  std::string detail;
  bool ok = true;
  auto expect = [&](bool cond, const std::string& what) {
    if (!cond && ok) detail = what;
    ok = ok && cond;
  };
  TrilevelOptions o = TrilevelOptions::plain(0.1, 0.1, 0.1, 0.1, 0.01);
  o.weighting.lambda = 0;
  o.hypergrad.negate_term = options.negate_term;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    QuadraticInstance in = random_quadratic_instance(options.seed + seed);
    TrilevelState s = TrilevelState::create(in.at.a, in.at.w1, in.at.w1, in.at.g, in.at.h, o);
    const ClassLossVector l = in.problem.class_losses(s.a, s.w1, false).l;
    TrilevelState w1_only = s;
    step_w1(in.problem, w1_only);
    TrilevelState both = s;
    step_w1(in.problem, both);
    const W2Step r = step_w2(in.problem, both, l, o.weighting);
    expect(both.w2 == w1_only.w1 && r.synthetic == 0, "quadratic W2 step differs from the training step");
    TrilevelState it = TrilevelState::create(in.at.a, in.at.w1, in.at.w2, in.at.g, in.at.h, o);
    const IterationRecord rec = trilevel_iteration(in.problem, it, o);
    for (HypergradTerm k : {HypergradTerm::kW2Synthetic, HypergradTerm::kW2ClassCoupling, HypergradTerm::kW1Path,
                            HypergradTerm::kGeneratorPath}) {
      expect((rec.terms[k].array() == 0).all(), "quadratic term " + std::string(term_name(k)) + " nonzero");
    }
  }
  NeuralTrilevelProblem p = make_tiny_problem(weighting(0));
  p.begin_iteration(0);
  TrilevelOptions n;
  n.weighting.lambda = 0;
  TrilevelState s = p.initial_state(n);
  s.w2 = s.w1;
  const ClassLossVector l = p.class_losses(s.a, s.w1, false).l;
  step_w1(p, s);
  step_w2(p, s, l, n.weighting);
  expect(s.w2 == s.w1, "neural W2 step differs from the training step");
  out.push_back({"lambda=0 laws", ok, ok ? "synthetic terms exactly zero, W2 step bitwise the training step" : detail});
}

}  // namespace

std::vector<VerifyCheck> cmd_verify(const VerifyOptions& options, std::ostream* log) {
  if (options.quadratic_instances < 1) throw ValidationError("verify needs at least one quadratic instance");
  std::vector<VerifyCheck> out;
  auto stage = [&](auto&& run) {
    const std::size_t first = out.size();
    run();
    if (!log) return;
    for (std::size_t i = first; i < out.size(); ++i) {
      char line[256];
      std::snprintf(line, sizeof(line), "%-4s  %-48s %s\n", out[i].passed ? "PASS" : "FAIL", out[i].name.c_str(),
                    out[i].detail.c_str());
      *log << line;
    }
    *log << std::flush;
  };
  stage([&] { gradient_checks(out); });
  stage([&] { quadratic_checks(options, out); });
  stage([&] { unrolled_checks(options, out); });
  stage([&] { lambda_zero_checks(options, out); });
  return out;
}

}  // namespace lfm
