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

// Conditional image generator G and the discriminator H that shares the
// searched cell architecture.

#pragma once

#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "lfm/search_space.hpp"

namespace lfm {

enum class GeneratorTier { kTiny, kSmall, kMedium };

std::string_view tier_name(GeneratorTier tier);
GeneratorTier parse_tier(std::string_view name);

struct GeneratorSpec {
  Index noise_dim = 8;
  Index label_embedding_dim = 4;
  // Overrides the tier's default widths: the hidden layer sizes for
  // `small`, the feature-map count of the low-resolution map for `medium`.
  std::vector<Index> hidden;
  Index num_classes = 4;
  Index height = 8;
  Index width = 8;
  Index channels = 1;
  GeneratorTier tier = GeneratorTier::kSmall;

  std::vector<Index> widths() const;
  void validate() const;
};

// tiny:   [embed(c), noise] -> linear -> tanh
// small:  [embed(c), noise] -> (linear -> relu)* -> linear -> tanh
// medium: [embed(c), noise] -> linear -> relu -> H/2 x W/2 x F map
//         -> upsample2x -> conv3x3 -> relu -> conv3x3 -> tanh
// `labels` is a float class-id vector, `noise` is [N, noise_dim].
Var append_generator(ParamFactory& pf, const GeneratorSpec& spec, Var labels, Var noise);

struct SyntheticBatch {
  Tensor images;  // [N, H, W, channels] in [-1, 1]
  std::vector<Index> labels;
  Tensor noise;  // [N, noise_dim]
};

Tensor sample_noise(Index n, Index dim, std::mt19937_64& rng);

class Generator {
 public:
  explicit Generator(GeneratorSpec spec, const std::string& prefix = "g.");

  const GeneratorSpec& spec() const { return spec_; }
  WeightSet init(std::uint64_t seed) const;
  // Pure function of (G, labels, noise).
  SyntheticBatch generate(const WeightSet& g, std::span<const Index> labels, const Tensor& noise) const;

 private:
  GeneratorSpec spec_;
  std::string prefix_;
  Graph graph_;
};

// The classifier spec with one extra input channel for the label plane.
SupernetSpec discriminator_spec(const SupernetSpec& classifier);

// Supernet trunk on [images, label plane] with a scalar head; returns the
// [N, 1] real/fake logit. The label plane is a learned [C, H*W] table.
Var append_discriminator(ParamFactory& pf, const SupernetSpec& classifier, const ArchVars& arch, Var images,
                         Var labels);

// Standalone discriminator with inputs "images", "labels" and outputs
// "logit" and "prob" (sigmoid).
struct Discriminator {
  Graph graph;
  WeightSet weights;
};
Discriminator build_discriminator(const SupernetSpec& classifier, std::uint64_t seed, const std::string& prefix = "h.");

struct GanOptions {
  // Generator descends -log D(fake) instead of the shared objective.
  bool non_saturating = false;
};

struct GanInputs {
  const Tensor* real_images = nullptr;
  const Tensor* real_labels = nullptr;  // conditioning labels of the real batch (float ids)
  const Tensor* fake_labels = nullptr;
  const Tensor* noise = nullptr;
};

struct GanEvaluation {
  // L = mean log D(real) + mean log(1 - D(fake)); H ascends it.
  Scalar objective = 0;
  // What G descends: L, or -mean log D(fake) when non-saturating.
  Scalar generator_objective = 0;
  GradientMap d_g;     // of generator_objective
  GradientMap d_h;     // of objective
  GradientMap d_arch;  // of generator_objective, when requested
};

// One graph holding G, H and the architecture for the adversarial objective.
class GanModel {
 public:
  GanModel(const SupernetSpec& classifier, GeneratorSpec generator, GanOptions options = {});

  const GeneratorSpec& generator_spec() const { return gen_spec_; }
  WeightSet init_generator(std::uint64_t seed) const;
  WeightSet init_discriminator(std::uint64_t seed) const;

  GanEvaluation evaluate(const WeightSet& g, const WeightSet& h, const TensorMap& arch, const GanInputs& in,
                         bool want_g = true, bool want_h = true, bool want_arch = false) const;

 private:
  SupernetSpec cls_spec_;
  GeneratorSpec gen_spec_;
  GanOptions options_;
  Graph graph_;
};

struct GanStepResult {
  WeightSet g;
  WeightSet h;
  Scalar objective = 0;
  Scalar generator_objective = 0;
};

// One simultaneous plain step: G' = G - xi_g dG, H' = H + xi_h dH, both
// gradients taken at (G, H).
GanStepResult gan_step(const GanModel& model, const WeightSet& g, const WeightSet& h, const ArchParams& arch,
                       const GanInputs& in, Scalar xi_g, Scalar xi_h);

}  // namespace lfm
