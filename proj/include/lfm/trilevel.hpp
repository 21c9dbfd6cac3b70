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

// The alternating one-step tri-level updates and the architecture
// hypergradient, written against an abstract problem over flat vectors so
// the same code drives analytic quadratics and neural supernets.
//
// Per iteration, with A the architecture:
//   W1' = W1 - step(grad_W L_tr(A, W1))
//   G'  = G  - step(grad_G L_gan(A, G, H)),  H' = H + step(grad_H L_gan)
//   l_c = l_c(A, W1'),  w_c = weight(l)
//   W2' = W2 - step(grad_W [L_tr(A, W2) + sum_c w_c S_c(A, W2, G')])
//   A'  = A  - adam(d L_val(A, W2') / dA)
// where the total derivative of L_val flows through W2' directly, through
// the class weights and W1', and through G'.

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lfm/optim.hpp"
#include "lfm/reweight.hpp"

namespace lfm {

// Which derivatives a problem evaluation should return.
enum Need : unsigned {
  kNeedNone = 0,
  kNeedArch = 1u << 0,
  kNeedW = 1u << 1,
  kNeedG = 1u << 2,
  kNeedH = 1u << 3,
};

struct ProblemDims {
  Index arch = 0;
  Index w = 0;  // W1 and W2 share one layout
  Index g = 0;
  Index h = 0;
  Index classes = 0;
};

struct LossGrad {
  Scalar value = 0;
  Vector d_arch;
  Vector d_w;
};

// l_c(A, W1) with per-class gradients (empty unless requested).
struct ClassLossGrads {
  ClassLossVector l;
  std::vector<Vector> d_arch;
  std::vector<Vector> d_w;
};

// sum_c weights_c S_c(A, W2, G) and the per-class reduced losses S_c.
struct SyntheticEval {
  Vector class_values;
  Scalar value = 0;
  Vector d_arch;
  Vector d_w;
  Vector d_g;
};

// d_g and d_arch are of the generator objective, d_h of the shared one.
struct GanEval {
  Scalar objective = 0;
  Scalar generator_objective = 0;
  Vector d_g;
  Vector d_h;
  Vector d_arch;
};

// The losses of one tri-level problem. Between begin_iteration() calls every
// evaluation sees the same data, so each method is a deterministic function
// of its vector arguments.
class TrilevelProblem {
 public:
  virtual ~TrilevelProblem() = default;

  virtual ProblemDims dims() const = 0;
  virtual void begin_iteration(Index /*step*/) {}

  virtual LossGrad train_loss(const Vector& a, const Vector& w, unsigned need) const = 0;
  virtual LossGrad val_loss(const Vector& a, const Vector& w, unsigned need) const = 0;
  virtual ClassLossGrads class_losses(const Vector& a, const Vector& w1, bool want_grads) const = 0;
  virtual SyntheticEval synthetic_loss(const Vector& a, const Vector& w2, const Vector& g, const Vector& weights,
                                       unsigned need) const = 0;
  virtual GanEval gan(const Vector& a, const Vector& g, const Vector& h, unsigned need) const = 0;
};

enum class HypergradMode { kFirstOrder, kSecondOrder };

std::string_view hypergrad_mode_name(HypergradMode mode);
HypergradMode parse_hypergrad_mode(std::string_view name);

// Named contributions to dL_val/dA.
enum class HypergradTerm {
  kDirect,           // partial of L_val in A at W2'
  kW2Train,          // through W2' via the real training loss
  kW2Synthetic,      // through W2' via the synthetic loss at fixed weights and G'
  kW2ClassCoupling,  // through the class weights' explicit A-dependence
  kW1Path,           // through the class weights and W1'
  kGeneratorPath,    // through G'
};

inline constexpr HypergradTerm kAllHypergradTerms[] = {
    HypergradTerm::kDirect,          HypergradTerm::kW2Train, HypergradTerm::kW2Synthetic,
    HypergradTerm::kW2ClassCoupling, HypergradTerm::kW1Path,  HypergradTerm::kGeneratorPath,
};

std::string_view term_name(HypergradTerm term);

struct HypergradTerms {
  Scalar val_loss = 0;  // L_val(A, W2') the terms differentiate
  Vector direct, w2_train, w2_synthetic, w2_class_coupling, w1_path, generator_path;

  static HypergradTerms zeros(Index n);
  Vector& operator[](HypergradTerm term);
  const Vector& operator[](HypergradTerm term) const;
  Vector total() const;
};

struct HypergradOptions {
  HypergradMode mode = HypergradMode::kSecondOrder;
  // Finite-difference radius: step = eps / ||direction||. On small
  // networks a radius of 1e-2 already leaves 10-30% curvature error.
  Scalar hvp_eps = Scalar(1e-4);
  // Fault injection for verification: flips the sign of one term.
  std::optional<HypergradTerm> negate_term;

  void validate() const;
};

struct RateSchedule {
  Scalar w1 = Scalar(0.025);
  Scalar w2 = Scalar(0.025);
  Scalar g = Scalar(2e-4);
  Scalar h = Scalar(2e-4);
  Scalar a = Scalar(3e-4);
  // W1/W2 rates follow per-epoch cosine decay to `floor` when set.
  bool cosine = true;
  Scalar floor = Scalar(0.001);

  void validate() const;
};

struct TrilevelOptions {
  RateSchedule rates;
  OptimizerConfig w_optimizer = OptimizerConfig::sgd(0.025, 0.9, 3e-4, 5);
  OptimizerConfig gan_optimizer = OptimizerConfig::adam(2e-4, 0.5, 0.999, 0);
  OptimizerConfig arch_optimizer = OptimizerConfig::adam(3e-4, 0.5, 0.999, 1e-3);
  WeightingConfig weighting;
  HypergradOptions hypergrad;

  // Plain gradient steps everywhere except A: no momentum, weight decay,
  // clipping or adaptive moments, constant rates.
  static TrilevelOptions plain(Scalar xi_w1, Scalar xi_w2, Scalar xi_g, Scalar xi_h, Scalar xi_a);

  void validate() const;
};

struct TrilevelState {
  Vector a, w1, w2, g, h;
  Optimizer opt_a, opt_w1, opt_w2, opt_g, opt_h;
  Index step = 0;

  static TrilevelState create(Vector a, Vector w1, Vector w2, Vector g, Vector h, const TrilevelOptions& options);
  bool all_finite() const;
};

// Sets this epoch's rates on the state's optimizers.
void apply_schedule(TrilevelState& state, const TrilevelOptions& options, Index epoch, Index epochs);

// Everything the hypergradient needs from earlier in the iteration.
struct IterationContext {
  Vector w1_pre, w2_pre, g_pre, h_pre;
  ClassLossGrads class_losses;  // at (A, W1')
  Vector class_weights;
};

// Individual updates. Each mutates the state and returns the loss it descended.
Scalar step_w1(const TrilevelProblem& problem, TrilevelState& state);
GanEval step_gan(const TrilevelProblem& problem, TrilevelState& state);

struct W2Step {
  Scalar real = 0;
  Scalar synthetic = 0;
};
// Class weights are derived from `l` under `cfg`. With lambda = 0 the
// synthetic pathway is skipped and the update is a plain training step.
W2Step step_w2(const TrilevelProblem& problem, TrilevelState& state, const ClassLossVector& l,
               const WeightingConfig& cfg);

HypergradTerms hypergradient(const TrilevelProblem& problem, const TrilevelState& state,
                             const IterationContext& context, const TrilevelOptions& options);

void step_arch(TrilevelState& state, const Vector& hypergrad);

struct IterationRecord {
  Index iteration = 0;
  Index epoch = 0;
  Scalar loss_w1 = 0;
  Scalar loss_gan_g = 0;  // generator objective
  Scalar loss_gan_h = 0;  // shared objective H ascends
  Scalar loss_w2_real = 0;
  Scalar loss_w2_synth = 0;
  Scalar val_loss = 0;  // at (A, W2') before the A step
  Vector class_losses;
  Scalar grad_norm_a = 0;
  HypergradTerms terms;
};

// One pass of the alternating loop: draws the iteration's data, then one
// step per variable group. The caller sets rates beforehand.
IterationRecord trilevel_iteration(TrilevelProblem& problem, TrilevelState& state, const TrilevelOptions& options);

}  // namespace lfm
