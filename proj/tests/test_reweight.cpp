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

#include "lfm/gradcheck.hpp"
#include "lfm/reweight.hpp"

using namespace lfm;
using namespace lfm::gradcheck;

namespace {

ClassLossVector losses(std::initializer_list<Scalar> values) {
  ClassLossVector l;
  l.values = Vector(static_cast<Index>(values.size()));
  Index i = 0;
  for (Scalar v : values) l.values[i++] = v;
  l.counts.assign(values.size(), 1);
  l.present.assign(values.size(), true);
  return l;
}

Vector vec(std::initializer_list<Scalar> values) {
  Vector v(static_cast<Index>(values.size()));
  Index i = 0;
  for (Scalar x : values) v[i++] = x;
  return v;
}

SupernetSpec tiny_spec() {
  SupernetSpec s;
  s.num_cells = 1;
  s.num_nodes = 4;
  s.channels = 2;
  s.stem_multiplier = 1;
  s.num_classes = 3;
  s.input_height = s.input_width = 4;
  return s;
}

}  // namespace

TEST_CASE("per-class losses of a perfect and a uniform model") {
  const std::vector<Index> labels{0, 2, 1, 1, 0, 2, 2};
  Tensor perfect({7, 3}), uniform({7, 3});
  for (Index i = 0; i < 7; ++i) perfect[i * 3 + labels[static_cast<std::size_t>(i)]] = 60;
  const ClassLossVector p = class_losses_from_terms(per_example_cross_entropy(perfect, labels), labels, 3);
  const ClassLossVector u = class_losses_from_terms(per_example_cross_entropy(uniform, labels), labels, 3);
  for (Index c = 0; c < 3; ++c) {
    CHECK(p.values[c] <= 1e-20);
    CHECK(u.values[c] == doctest::Approx(std::log(3.0)).epsilon(1e-14));
  }
  CHECK(u.counts == std::vector<Index>{2, 2, 3});
}

TEST_CASE("per-class losses average within each class") {
  const std::vector<Index> labels{0, 1, 0};
  const ClassLossVector l = class_losses_from_terms(vec({0.2, 1.0, 0.4}), labels, 2);
  CHECK(l.values[0] == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(l.values[1] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("absent classes are flagged with value zero") {
  const std::vector<Index> labels{0, 0, 2};
  const ClassLossVector l = class_losses_from_terms(vec({1, 2, 3}), labels, 3);
  CHECK(l.values[1] == 0);
  CHECK_FALSE(l.present[1]);
  CHECK(l.present[0]);
  CHECK(l.counts[1] == 0);
  CHECK_THROWS_AS(class_losses_from_terms(Vector(0), std::vector<Index>{}, 3), ValidationError);
  CHECK_THROWS_AS(class_losses_from_terms(vec({1}), std::vector<Index>{5}, 3), ValidationError);
}

TEST_CASE("class losses through a network with a zeroed head equal ln C") {
  const SupernetSpec spec = tiny_spec();
  const Network net = build_supernet(spec, 3);
  WeightSet w = net.weights;
  w.at("w.head.w").array() = 0;
  w.at("w.head.b").array() = 0;
  LabeledImageSet val;
  std::mt19937_64 rng(2);
  val.images = random_tensor({9, 4, 4, 1}, rng, 0.3);
  val.labels = {0, 1, 2, 0, 1, 2, 0, 1, 2};
  val.num_classes = 3;
  const ClassLossVector l = class_losses(net, w, ArchParams::zeros(spec), val, 4);
  for (Index c = 0; c < 3; ++c) CHECK(l.values[c] == doctest::Approx(std::log(3.0)).epsilon(1e-13));

  LabeledImageSet empty;
  empty.images = Tensor({0, 4, 4, 1});
  empty.num_classes = 3;
  CHECK_THROWS_AS(class_losses(net, w, ArchParams::zeros(spec), empty), ValidationError);
}

TEST_CASE("weighted objective arithmetic") {
  const WeightingConfig cfg;
  const std::vector<Index> synth{0, 1};
  const WeightedObjective o = weighted_objective(3.0, vec({1.0, 2.0}), synth, losses({0.5, 2.0}), cfg);
  CHECK(o.total() == doctest::Approx(7.5).epsilon(1e-15));
  CHECK(o.real == 3.0);
  CHECK(o.class_synthetic[0] == 1.0);
  CHECK(o.class_synthetic[1] == 2.0);
}

TEST_CASE("lambda zero leaves exactly the real loss") {
  WeightingConfig cfg;
  cfg.lambda = 0;
  const std::vector<Index> synth{0, 1, 1};
  const WeightedObjective o = weighted_objective(1.234, vec({5, 6, 7}), synth, losses({0.9, 3.0}), cfg);
  CHECK(o.total() == 1.234);
  CHECK(o.synthetic == 0);
}

TEST_CASE("synthetic-only mode drops the real term") {
  WeightingConfig cfg;
  cfg.synthetic_only = true;
  const std::vector<Index> synth{0, 1};
  const WeightedObjective o = weighted_objective(3.0, vec({1.0, 2.0}), synth, losses({0.5, 2.0}), cfg);
  CHECK(o.real == 0);
  CHECK(o.total() == doctest::Approx(4.5).epsilon(1e-15));
}

TEST_CASE("equal class losses scale the total synthetic loss") {
  const WeightingConfig cfg{.lambda = 1.5};
  const std::vector<Index> synth{0, 1, 2, 2, 1};
  const Vector terms = vec({0.1, 0.7, 1.3, 0.2, 0.9});
  const WeightedObjective o = weighted_objective(0, terms, synth, losses({0.8, 0.8, 0.8}), cfg);
  CHECK(o.synthetic == doctest::Approx(1.5 * 0.8 * terms.sum()).epsilon(1e-14));
}

TEST_CASE("weighted objective is affine in each class loss") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<Scalar> u(0.05, 3);
  const WeightingConfig cfg{.lambda = 0.7};
  const std::vector<Index> synth{0, 1, 2, 0, 2, 2};
  Vector terms(6);
  for (Index i = 0; i < 6; ++i) terms[i] = u(rng);
  for (int trial = 0; trial < 20; ++trial) {
    ClassLossVector l = losses({u(rng), u(rng), u(rng)});
    const Scalar base = weighted_objective(0.4, terms, synth, l, cfg).total();
    const Index c = trial % 3;
    Scalar coeff = 0;
    for (Index i = 0; i < 6; ++i) {
      if (synth[static_cast<std::size_t>(i)] == c) coeff += terms[i];
    }
    ClassLossVector doubled = l;
    doubled.values[c] *= 2;
    const Scalar after = weighted_objective(0.4, terms, synth, doubled, cfg).total();
    CHECK(after - base == doctest::Approx(cfg.lambda * coeff * l.values[c]).epsilon(1e-12));
  }
}

TEST_CASE("class-mean reduction divides by the class count") {
  const WeightingConfig cfg{.reduction = SyntheticReduction::kClassMean};
  const std::vector<Index> synth{0, 0, 1};
  const WeightedObjective o = weighted_objective(0, vec({1, 3, 5}), synth, losses({1, 2}), cfg);
  CHECK(o.class_synthetic[0] == doctest::Approx(2.0));
  CHECK(o.class_synthetic[1] == doctest::Approx(5.0));
  CHECK(o.synthetic == doctest::Approx(12.0));
  CHECK(parse_reduction(reduction_name(SyntheticReduction::kClassMean)) == SyntheticReduction::kClassMean);
  CHECK_THROWS_AS(parse_reduction("median"), ValidationError);
}

TEST_CASE("class weights and their vector-Jacobian product") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<Scalar> u(0.1, 2);
  for (bool normalize : {false, true}) {
    WeightingConfig cfg{.lambda = 1.3, .normalize_weights = normalize};
    ClassLossVector l = losses({u(rng), u(rng), u(rng), u(rng)});
    l.present[2] = false;
    l.values[2] = 0;
    const Vector s = vec({0.3, -1.1, 0.8, 2.0});
    const Vector r = class_weights_vjp(l, cfg, s);
    const Scalar h = 1e-6;
    for (Index k = 0; k < 4; ++k) {
      if (!l.present[static_cast<std::size_t>(k)]) {
        CHECK(r[k] == 0);
        continue;
      }
      ClassLossVector lp = l, lm = l;
      lp.values[k] += h;
      lm.values[k] -= h;
      const Scalar fd = (s.dot(class_weights(lp, cfg)) - s.dot(class_weights(lm, cfg))) / (2 * h);
      CHECK(r[k] == doctest::Approx(fd).epsilon(1e-8));
    }
    if (normalize) {
      const Vector w = class_weights(l, cfg);
      CHECK(w.sum() / 3 == doctest::Approx(cfg.lambda).epsilon(1e-14));
    }
  }
}

TEST_CASE("synthetic label policies") {
  const std::vector<Index> batch{2, 0, 0, 1};
  CHECK(synthetic_labels(WeightingConfig{}, batch, 3) == batch);
  const WeightingConfig fixed{.m_policy = MPolicy::kFixedPerClass, .m_per_class = 2};
  CHECK(synthetic_labels(fixed, batch, 3) == std::vector<Index>{0, 0, 1, 1, 2, 2});
  CHECK(parse_m_policy(m_policy_name(MPolicy::kFixedPerClass)) == MPolicy::kFixedPerClass);
  CHECK_THROWS_AS((WeightingConfig{.m_policy = MPolicy::kFixedPerClass, .m_per_class = 0}.validate()),
                  ValidationError);
  CHECK_THROWS_AS((WeightingConfig{.lambda = -1}.validate()), ValidationError);
}

TEST_CASE("weighted objective through a network") {
  const SupernetSpec spec = tiny_spec();
  const Network net = build_supernet(spec, 5);
  const ArchParams arch = ArchParams::random(spec, 6);
  std::mt19937_64 rng(8);
  LabeledImageSet data;
  data.images = random_tensor({6, 4, 4, 1}, rng, 0.3);
  data.labels = {0, 1, 2, 2, 1, 0};
  data.num_classes = 3;
  const std::vector<Index> idx{0, 1, 2, 3, 4, 5};
  const Batch real = make_batch(data, idx);
  SyntheticBatch synth;
  synth.images = random_tensor({3, 4, 4, 1}, rng, 0.3);
  synth.labels = {0, 1, 2};
  const ClassLossVector l = losses({0.5, 1.0, 2.0});

  const Scalar plain = per_example_cross_entropy(predict(net, net.weights, &arch, real.images), real.label_ids).mean();
  const WeightedObjective zero = weighted_objective(net, net.weights, arch, real, synth, l, WeightingConfig{.lambda = 0});
  CHECK(zero.total() == plain);

  const WeightedObjective one = weighted_objective(net, net.weights, arch, real, synth, l, WeightingConfig{});
  const Vector st = per_example_cross_entropy(predict(net, net.weights, &arch, synth.images), synth.labels);
  CHECK(one.synthetic == doctest::Approx(0.5 * st[0] + 1.0 * st[1] + 2.0 * st[2]).epsilon(1e-13));

  synth.labels = {0, 3, 1};
  CHECK_THROWS(weighted_objective(net, net.weights, arch, real, synth, l, WeightingConfig{}));
}
