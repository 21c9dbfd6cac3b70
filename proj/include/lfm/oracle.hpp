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

// Ground truth for the hypergradient: quadratic tri-level problems with
// closed-form Jacobians, and brute-force finite differences of the fully
// unrolled update pipeline.

#pragma once

#include <cstdint>
#include <random>

#include "lfm/trilevel.hpp"

namespace lfm {

// 0.5 x^T M x + b^T x + c
template <typename T>
struct QuadraticForm {
  MatrixX<T> M;
  VectorX<T> b;
  T c = 0;

  Index size() const { return b.size(); }
  T value(const VectorX<T>& x) const { return T(0.5) * x.dot(M * x) + b.dot(x) + c; }
  VectorX<T> grad(const VectorX<T>& x) const { return M * x + b; }
};

// Symmetric matrix with eigenvalues drawn uniformly from [lo, hi].
template <typename T>
MatrixX<T> random_spd(Index n, T lo, T hi, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform{double(lo), double(hi)};
  MatrixX<T> g(n, n);
  for (Index i = 0; i < g.size(); ++i) g.data()[i] = T(normal(rng));
  const Eigen::HouseholderQR<MatrixX<T>> qr(g);
  const MatrixX<T> q = qr.householderQ();
  VectorX<T> eig(n);
  for (Index i = 0; i < n; ++i) eig[i] = T(uniform(rng));
  return q * eig.asDiagonal() * q.transpose();
}

template <typename T>
VectorX<T> random_vector(Index n, T scale, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0, double(scale));
  VectorX<T> v(n);
  for (Index i = 0; i < n; ++i) v[i] = T(normal(rng));
  return v;
}

struct QuadraticDims {
  Index arch = 3;
  Index w = 4;
  Index g = 3;
  Index h = 2;
  Index classes = 3;

  void validate() const;
};

// Every loss is a joint quadratic over the concatenation of its arguments:
//   L_tr, L_val, l_c over [A, W];  S_c over [A, W, G];  L_gan over [A, G, H]
// with convex blocks (eigenvalues in [0.5, 2]) except that L_gan is
// concave in H. The generator descends L_gan itself.
class QuadraticTrilevelProblem final : public TrilevelProblem {
 public:
  QuadraticTrilevelProblem(QuadraticDims dims, QuadraticForm<Scalar> train, QuadraticForm<Scalar> val,
                           std::vector<QuadraticForm<Scalar>> class_loss, std::vector<QuadraticForm<Scalar>> synthetic,
                           QuadraticForm<Scalar> gan);

  // `decoupled` zeroes every block linking A to another variable and drops A
  // from the class losses entirely.
  static QuadraticTrilevelProblem random(const QuadraticDims& dims, std::uint64_t seed, bool decoupled = false);

  const QuadraticDims& quadratic_dims() const { return dims_; }
  const QuadraticForm<Scalar>& train() const { return train_; }
  const QuadraticForm<Scalar>& val() const { return val_; }
  const QuadraticForm<Scalar>& class_loss(Index c) const { return class_loss_[static_cast<std::size_t>(c)]; }
  const QuadraticForm<Scalar>& synthetic(Index c) const { return synthetic_[static_cast<std::size_t>(c)]; }
  const QuadraticForm<Scalar>& gan_form() const { return gan_; }

  ProblemDims dims() const override;
  LossGrad train_loss(const Vector& a, const Vector& w, unsigned need) const override;
  LossGrad val_loss(const Vector& a, const Vector& w, unsigned need) const override;
  ClassLossGrads class_losses(const Vector& a, const Vector& w1, bool want_grads) const override;
  SyntheticEval synthetic_loss(const Vector& a, const Vector& w2, const Vector& g, const Vector& weights,
                               unsigned need) const override;
  GanEval gan(const Vector& a, const Vector& g, const Vector& h, unsigned need) const override;

 private:
  QuadraticDims dims_;
  QuadraticForm<Scalar> train_, val_;
  std::vector<QuadraticForm<Scalar>> class_loss_, synthetic_;
  QuadraticForm<Scalar> gan_;
};

// Where one unrolled iteration starts.
struct UnrollPoint {
  Vector a, w1, w2, g, h;
};

// Plain step sizes of the unrolled pipeline.
struct UnrollRates {
  Scalar w1 = 0;
  Scalar w2 = 0;
  Scalar g = 0;
  Scalar h = 0;
};

// Exact dL_val/dA of one plain-step iteration, split into the same named
// terms as hypergradient(), from the problem's matrices alone.
HypergradTerms analytic_quadratic_hypergrad(const QuadraticTrilevelProblem& problem, const UnrollPoint& at,
                                            const UnrollRates& rates, const WeightingConfig& cfg);

// L_val(A, W2') after one plain-step pass of every stage, as a function of A.
Scalar unrolled_val_loss(const TrilevelProblem& problem, const UnrollPoint& at, const UnrollRates& rates,
                         const WeightingConfig& cfg);

// Central differences of unrolled_val_loss over each coordinate of A.
Vector unrolled_hypergrad_fd(const TrilevelProblem& problem, const UnrollPoint& at, const UnrollRates& rates,
                             const WeightingConfig& cfg, Scalar eps);

// Richardson extrapolation of two central differences, (4 D(eps/2) - D(eps)) / 3,
// whose error is fourth order in eps. Used where the gradient is small next
// to the loss and plain differences run out of precision.
Vector unrolled_hypergrad_fd_extrapolated(const TrilevelProblem& problem, const UnrollPoint& at,
                                          const UnrollRates& rates, const WeightingConfig& cfg, Scalar eps);

// hypergradient() after one plain-step pass from `at`, driven through the
// regular step functions. A's own optimizer is not stepped.
HypergradTerms pipeline_hypergrad(const TrilevelProblem& problem, const UnrollPoint& at, const UnrollRates& rates,
                                  const WeightingConfig& cfg, const HypergradOptions& options);

// A random problem with its evaluation point, rates and weighting: every
// dimension in [1, 10], 1 to 6 classes, rates in [0.01, 0.3], lambda in
// [0.25, 3]; odd seeds normalize the weights and every fifth seed drops
// the real-data term.
struct QuadraticInstance {
  QuadraticTrilevelProblem problem;
  UnrollPoint at;
  UnrollRates rates;
  WeightingConfig cfg;
};
QuadraticInstance random_quadratic_instance(std::uint64_t seed, bool decoupled = false);

// Relative error ||a - b|| / max(||b||, floor).
Scalar relative_error(const Vector& a, const Vector& b, Scalar floor = Scalar(1e-12));

}  // namespace lfm
