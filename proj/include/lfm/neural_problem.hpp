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

// The tri-level problem over a relaxed supernet classifier (W1, W2), a
// conditional generator (G) and a cell-sharing discriminator (H), with all
// variables exchanged as flat vectors.

#pragma once

#include <cstdint>
#include <vector>

#include "lfm/cig.hpp"
#include "lfm/data.hpp"
#include "lfm/reweight.hpp"
#include "lfm/trilevel.hpp"

namespace lfm {

struct NeuralProblemSpec {
  SupernetSpec supernet;
  GeneratorSpec generator;
  GanOptions gan;
  WeightingConfig weighting;
  Index batch = 32;
  std::uint64_t seed = 0;

  void validate() const;
};

// Mini-batches of one iteration. Every draw is a pure function of
// (seed, step), so a run can be replayed from any step.
struct IterationBatches {
  Batch train;      // W1 step and the real term of the W2 step
  Batch cig;        // real side of the adversarial objective
  Batch val;        // L_val for the architecture
  Batch class_val;  // l_c, drawn independently of `val`
  Tensor gan_noise;
  Tensor synth_labels;  // float ids
  std::vector<Index> synth_label_ids;
  Tensor synth_noise;
};

class NeuralTrilevelProblem final : public TrilevelProblem {
 public:
  NeuralTrilevelProblem(NeuralProblemSpec spec, LabeledImageSet train, LabeledImageSet val);

  const NeuralProblemSpec& spec() const { return spec_; }
  const LabeledImageSet& train_set() const { return train_; }
  const LabeledImageSet& val_set() const { return val_; }
  Index batches_per_epoch() const;

  // Initial variables. W1 and W2 share a layout but not their draws.
  ArchParams initial_arch(Scalar scale = Scalar(1e-3)) const;
  TrilevelState initial_state(const TrilevelOptions& options, Scalar arch_scale = Scalar(1e-3)) const;

  // Flat-vector conversions.
  ArchParams arch_from(const Vector& a) const { return arch_template_.with_flat(a); }
  WeightSet weights_from(const Vector& w) const { return unflatten(w, w_template_); }
  WeightSet generator_from(const Vector& g) const { return unflatten(g, g_template_); }
  WeightSet discriminator_from(const Vector& h) const { return unflatten(h, h_template_); }
  const Network& classifier() const { return classifier_; }

  const IterationBatches& batches() const { return batches_; }

  ProblemDims dims() const override;
  void begin_iteration(Index step) override;
  LossGrad train_loss(const Vector& a, const Vector& w, unsigned need) const override;
  LossGrad val_loss(const Vector& a, const Vector& w, unsigned need) const override;
  ClassLossGrads class_losses(const Vector& a, const Vector& w1, bool want_grads) const override;
  SyntheticEval synthetic_loss(const Vector& a, const Vector& w2, const Vector& g, const Vector& weights,
                               unsigned need) const override;
  GanEval gan(const Vector& a, const Vector& g, const Vector& h, unsigned need) const override;

 private:
  LossGrad batch_loss(const Batch& batch, const Vector& a, const Vector& w, unsigned need) const;

  NeuralProblemSpec spec_;
  LabeledImageSet train_, val_;
  Network classifier_;  // with per-class masked loss outputs
  Graph synthetic_graph_;
  GanModel gan_model_;
  ArchParams arch_template_;
  WeightSet w_template_, g_template_, h_template_;
  IterationBatches batches_;
  bool has_batches_ = false;
};

// A two-class 4x4 instance with a one-cell, two-channel supernet and a tiny
// generator, small enough (W 180, G 84, H 197 parameters) for brute-force
// finite differences of the whole unrolled pipeline.
NeuralTrilevelProblem make_tiny_problem(const WeightingConfig& weighting, std::uint64_t seed = 0);

}  // namespace lfm
