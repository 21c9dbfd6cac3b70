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

// Per-class validation losses and the class-weighted real + synthetic
// objective used to train W2.

#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "lfm/cig.hpp"
#include "lfm/data.hpp"
#include "lfm/search_space.hpp"

namespace lfm {

struct ClassLossVector {
  Vector values;                // l_c, mean cross-entropy over class-c examples
  std::vector<Index> counts;    // examples of class c that contributed
  std::vector<bool> present;    // false: no examples, value forced to 0

  Index size() const { return values.size(); }
};

enum class MPolicy {
  kMatchBatch,     // one synthetic image per real example, same label
  kFixedPerClass,  // m_per_class images for every class
};

enum class SyntheticReduction {
  kSum,        // sum over the M synthetic images of a class
  kClassMean,  // mean over them
};

struct WeightingConfig {
  Scalar lambda = 1;
  MPolicy m_policy = MPolicy::kMatchBatch;
  Index m_per_class = 1;
  bool normalize_weights = false;  // rescale l to mean 1 over present classes
  bool synthetic_only = false;     // drop the real-data term
  SyntheticReduction reduction = SyntheticReduction::kSum;

  void validate() const;
};

std::string_view m_policy_name(MPolicy p);
MPolicy parse_m_policy(std::string_view name);
std::string_view reduction_name(SyntheticReduction r);
SyntheticReduction parse_reduction(std::string_view name);

// Per-example cross-entropy of [N, C] logits.
Vector per_example_cross_entropy(const Tensor& logits, std::span<const Index> labels);

// Groups per-example losses by class and averages.
ClassLossVector class_losses_from_terms(const Vector& terms, std::span<const Index> labels, Index num_classes);

// l_c of a classifier on a validation set. Logits come from one forward
// pass per batch of mixed classes so batch statistics match training.
ClassLossVector class_losses(const Network& net, const WeightSet& w, const ArchParams& arch,
                             const LabeledImageSet& val, Index batch = 256);

// Effective per-class weights w_c multiplying the class-c synthetic loss:
// lambda * l_c, or lambda * l_c / mean(l) when normalizing.
Vector class_weights(const ClassLossVector& l, const WeightingConfig& cfg);
// Vector-Jacobian product: r_k = sum_c s_c * d w_c / d l_k (0 for absent k).
Vector class_weights_vjp(const ClassLossVector& l, const WeightingConfig& cfg, const Vector& s);

// Per-example coefficient of each synthetic image in the objective:
// the class weight, divided by the class count under kClassMean.
Vector synthetic_example_weights(const Vector& class_weights, std::span<const Index> synth_labels,
                                 const WeightingConfig& cfg);

// Synthetic labels for one mini-batch under the M policy.
std::vector<Index> synthetic_labels(const WeightingConfig& cfg, std::span<const Index> batch_labels,
                                    Index num_classes);

struct WeightedObjective {
  Scalar real = 0;       // mean cross-entropy on the real batch (0 in synthetic-only mode)
  Scalar synthetic = 0;  // sum_c w_c * S_c
  Vector class_synthetic;  // S_c: reduced synthetic loss of class c
  Scalar total() const { return real + synthetic; }
};

// Arithmetic core: real loss plus the class-weighted synthetic losses.
WeightedObjective weighted_objective(Scalar real_loss, const Vector& synth_terms, std::span<const Index> synth_labels,
                                     const ClassLossVector& l, const WeightingConfig& cfg);

// Same objective evaluated through a classifier network.
WeightedObjective weighted_objective(const Network& net, const WeightSet& w2, const ArchParams& arch,
                                     const Batch& real, const SyntheticBatch& synth, const ClassLossVector& l,
                                     const WeightingConfig& cfg);

}  // namespace lfm
