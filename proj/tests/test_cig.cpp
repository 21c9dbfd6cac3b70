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

#include <algorithm>
#include <cmath>
#include <random>

#include "lfm/gradcheck.hpp"
#include "lfm/cig.hpp"
#include "lfm/data.hpp"

using namespace lfm;
using namespace lfm::gradcheck;

namespace {

SupernetSpec tiny_classifier(Index classes = 2) {
  SupernetSpec s;
  s.num_cells = 1;
  s.num_nodes = 4;
  s.channels = 2;
  s.stem_multiplier = 1;
  s.num_classes = classes;
  s.input_height = s.input_width = 4;
  s.input_channels = 1;
  return s;
}

GeneratorSpec tiny_generator(Index classes = 2) {
  GeneratorSpec g;
  g.num_classes = classes;
  g.height = g.width = 4;
  g.channels = 1;
  g.hidden = {6};
  return g;
}

Tensor float_labels(const std::vector<Index>& ids) {
  Tensor t({static_cast<Index>(ids.size())});
  for (std::size_t i = 0; i < ids.size(); ++i) t[static_cast<Index>(i)] = Scalar(ids[i]);
  return t;
}

struct GanFixture {
  SupernetSpec cls = tiny_classifier();
  GanModel model{cls, tiny_generator()};
  WeightSet g = model.init_generator(11);
  WeightSet h = model.init_discriminator(12);
  ArchParams arch = ArchParams::random(cls, 13, 0.5);
  Tensor real_images, real_labels, fake_labels, noise;

  explicit GanFixture(std::uint64_t seed = 5, Index n = 6) {
    std::mt19937_64 rng(seed);
    real_images = random_tensor({n, 4, 4, 1}, rng, 0.5);
    std::vector<Index> ids;
    for (Index i = 0; i < n; ++i) ids.push_back(i % 2);
    real_labels = float_labels(ids);
    std::reverse(ids.begin(), ids.end());
    fake_labels = float_labels(ids);
    noise = sample_noise(n, 8, rng);
  }

  GanInputs inputs() const { return {&real_images, &real_labels, &fake_labels, &noise}; }
};

Scalar max_rel(const GradientMap& a, const GradientMap& n) {
  Scalar worst = 0;
  for (const auto& [k, t] : a) {
    const Tensor& r = n.at(k);
    const Scalar diff = (t.array() - r.array()).matrix().norm();
    worst = std::max(worst, diff / std::max({t.array().matrix().norm(), r.array().matrix().norm(), Scalar(1e-12)}));
  }
  return worst;
}

}  // namespace

TEST_CASE("generate is deterministic and keeps the label multiset") {
  const Generator gen(tiny_generator(3));
  const WeightSet g = gen.init(4);
  std::mt19937_64 rng(9);
  std::vector<Index> labels;
  for (Index c = 0; c < 3; ++c) {
    for (Index m = 0; m < 4; ++m) labels.push_back(c);
  }
  const Tensor noise = sample_noise(12, 8, rng);
  const SyntheticBatch a = gen.generate(g, labels, noise);
  const SyntheticBatch b = gen.generate(g, labels, noise);
  CHECK(a.images.shape() == Shape{12, 4, 4, 1});
  CHECK((a.images.array() == b.images.array()).all());
  CHECK(a.labels == labels);
  CHECK(a.images.array().abs().maxCoeff() <= 1);
  CHECK(a.images.all_finite());
}

TEST_CASE("generate validates labels and noise") {
  const Generator gen(tiny_generator());
  const WeightSet g = gen.init(1);
  std::mt19937_64 rng(1);
  const std::vector<Index> bad{0, 2};
  CHECK_THROWS_AS(gen.generate(g, bad, sample_noise(2, 8, rng)), ValidationError);
  const std::vector<Index> ok{0, 1};
  CHECK_THROWS_AS(gen.generate(g, ok, sample_noise(3, 8, rng)), ShapeError);
}

TEST_CASE("generator tiers build and squash to [-1, 1]") {
  for (GeneratorTier tier : {GeneratorTier::kTiny, GeneratorTier::kSmall, GeneratorTier::kMedium}) {
    GeneratorSpec spec;
    spec.tier = tier;
    CHECK(parse_tier(tier_name(tier)) == tier);
    const Generator gen(spec);
    const WeightSet g = gen.init(3);
    std::mt19937_64 rng(2);
    const std::vector<Index> labels{0, 1, 2, 3};
    const SyntheticBatch out = gen.generate(g, labels, sample_noise(4, spec.noise_dim, rng));
    CHECK(out.images.shape() == Shape{4, 8, 8, 1});
    CHECK(out.images.array().abs().maxCoeff() <= 1);
  }
  CHECK(total_size(Generator(GeneratorSpec{.tier = GeneratorTier::kTiny}).init(1)) <
        total_size(Generator(GeneratorSpec{}).init(1)));
  CHECK_THROWS_AS(parse_tier("huge"), ValidationError);
}

TEST_CASE("gan model rejects a generator shape that does not match the classifier") {
  GeneratorSpec g = tiny_generator();
  g.height = 8;
  CHECK_THROWS_AS(GanModel(tiny_classifier(), g), ValidationError);
}

TEST_CASE("gan step with zero rates is the identity") {
  const GanFixture f;
  const GanStepResult r = gan_step(f.model, f.g, f.h, f.arch, f.inputs(), 0, 0);
  for (const auto& [k, t] : f.g) CHECK((r.g.at(k).array() == t.array()).all());
  for (const auto& [k, t] : f.h) CHECK((r.h.at(k).array() == t.array()).all());
}

TEST_CASE("gan step moves G down and H up the shared objective") {
  const GanFixture f;
  const GanInputs in = f.inputs();
  const Scalar before = f.model.evaluate(f.g, f.h, f.arch.tensors(), in, false, false).objective;
  for (Scalar xi : {Scalar(1e-3), Scalar(1e-4)}) {
    const GanStepResult up = gan_step(f.model, f.g, f.h, f.arch, in, 0, xi);
    CHECK(f.model.evaluate(f.g, up.h, f.arch.tensors(), in, false, false).objective >= before - 1e-8);
    const GanStepResult down = gan_step(f.model, f.g, f.h, f.arch, in, xi, 0);
    CHECK(f.model.evaluate(down.g, f.h, f.arch.tensors(), in, false, false).objective <= before + 1e-8);
  }
}

TEST_CASE("gan gradients match central differences") {
  const GanFixture f;
  const GanInputs in = f.inputs();
  const TensorMap arch = f.arch.tensors();
  const GanEvaluation e = f.model.evaluate(f.g, f.h, arch, in, true, true, true);
  const Scalar h = 1e-5;
  auto numeric = [&](const TensorMap& at, auto value) {
    GradientMap out = zeros_like(at);
    TensorMap probe = at;
    for (auto& [name, t] : probe) {
      for (Index i = 0; i < t.size(); ++i) {
        const Scalar saved = t[i];
        t[i] = saved + h;
        const Scalar fp = value(probe);
        t[i] = saved - h;
        const Scalar fm = value(probe);
        t[i] = saved;
        out.at(name)[i] = (fp - fm) / (2 * h);
      }
    }
    return out;
  };
  const GradientMap ng = numeric(f.g, [&](const TensorMap& g) {
    return f.model.evaluate(g, f.h, arch, in, false, false).generator_objective;
  });
  const GradientMap nh = numeric(f.h, [&](const TensorMap& hh) {
    return f.model.evaluate(f.g, hh, arch, in, false, false).objective;
  });
  const GradientMap na = numeric(arch, [&](const TensorMap& a) {
    return f.model.evaluate(f.g, f.h, a, in, false, false).generator_objective;
  });
  CHECK(max_rel(e.d_g, ng) <= 1e-4);
  CHECK(max_rel(e.d_h, nh) <= 1e-4);
  CHECK(max_rel(e.d_arch, na) <= 1e-4);
}

TEST_CASE("non-saturating generator objective has its own gradient") {
  const SupernetSpec cls = tiny_classifier();
  const GanModel ns(cls, tiny_generator(), GanOptions{.non_saturating = true});
  const GanFixture f;
  const GanInputs in = f.inputs();
  const TensorMap arch = f.arch.tensors();
  const GanEvaluation sat = f.model.evaluate(f.g, f.h, arch, in);
  const GanEvaluation non = ns.evaluate(f.g, f.h, arch, in);
  CHECK(sat.objective == doctest::Approx(non.objective).epsilon(1e-12));
  CHECK(sat.generator_objective == sat.objective);
  CHECK(non.generator_objective != doctest::Approx(non.objective));
  CHECK(max_rel(sat.d_h, non.d_h) <= 1e-12);
  // both push fake logits up, so the G gradients point the same way
  CHECK(dot(sat.d_g, non.d_g) > 0);
}

TEST_CASE("gan gradients are invariant to the order of the real batch") {
  GanFixture f;
  const GanEvaluation a = f.model.evaluate(f.g, f.h, f.arch.tensors(), f.inputs());
  const Index n = f.real_images.dim(0);
  std::vector<Index> perm(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = (i * 5 + 3) % n;
  Tensor images = f.real_images, labels = f.real_labels;
  const Index stride = f.real_images.size() / n;
  for (Index i = 0; i < n; ++i) {
    const Index j = perm[static_cast<std::size_t>(i)];
    std::copy_n(f.real_images.data() + j * stride, stride, images.data() + i * stride);
    labels[i] = f.real_labels[j];
  }
  f.real_images = images;
  f.real_labels = labels;
  const GanEvaluation b = f.model.evaluate(f.g, f.h, f.arch.tensors(), f.inputs());
  CHECK(std::abs(a.objective - b.objective) <= 1e-12);
  for (const GradientMap* m : {&a.d_g, &a.d_h}) {
    const GradientMap& other = m == &a.d_g ? b.d_g : b.d_h;
    for (const auto& [k, t] : *m) {
      CHECK((t.array() - other.at(k).array()).abs().maxCoeff() <= 1e-9);
    }
  }
}

TEST_CASE("discriminator output is a probability and depends on the architecture") {
  const SupernetSpec cls = tiny_classifier();
  const Discriminator d = build_discriminator(cls, 3);
  std::mt19937_64 rng(4);
  const Tensor images = random_tensor({5, 4, 4, 1}, rng);
  const Tensor labels = float_labels({0, 1, 1, 0, 1});
  auto run = [&](const ArchParams& a) {
    const TensorMap at = a.tensors();
    Bindings b;
    b.bind(d.weights).bind(at).bind("images", images).bind("labels", labels);
    return forward(d.graph, b, {"prob"}).output("prob");
  };
  const Tensor p = run(ArchParams::zeros(cls));
  CHECK(p.shape() == Shape{5, 1});
  CHECK(p.array().minCoeff() > 0);
  CHECK(p.array().maxCoeff() < 1);
  const Tensor q = run(ArchParams::random(cls, 8, 2.0));
  CHECK((p.array() - q.array()).abs().maxCoeff() > 1e-6);
}

TEST_CASE("discriminator trunk has the classifier's tensor shapes") {
  const SupernetSpec cls = tiny_classifier(3);
  const Network w1 = build_supernet(cls, 1);
  const WeightSet h = build_discriminator(cls, 2).weights;
  auto trunk = [](const TensorMap& m, const std::string& prefix) {
    std::map<std::string, Shape> out;
    for (const auto& [k, t] : strip_prefix(m, prefix)) {
      if (k.starts_with("stem.") || k.starts_with("head.") || k == "label_plane") continue;
      out.emplace(k, t.shape());
    }
    return out;
  };
  const auto a = trunk(w1.weights, "w."), b = trunk(h, "h.");
  CHECK(a.size() > 0);
  CHECK(a == b);
  // stem sees the extra label plane, head is scalar
  CHECK(h.at("h.stem.conv").dim(2) == w1.weights.at("w.stem.conv").dim(2) + 1);
  CHECK(h.at("h.head.w").dim(1) == 1);
  // independent initialization
  CHECK((h.at("h.cell0.pre0.conv").array() != w1.weights.at("w.cell0.pre0.conv").array()).any());
}

TEST_CASE("adversarial training separates the per-class generator means") {
  BlobOptions bo;
  bo.num_classes = 2;
  bo.per_class = 128;
  bo.height = bo.width = 4;
  bo.separation = 4;
  bo.seed = 21;
  const BlobSet blobs = synth_blobs(bo);
  const SupernetSpec cls = tiny_classifier();
  const GanModel model(cls, tiny_generator());
  WeightSet g = model.init_generator(31);
  WeightSet h = model.init_discriminator(32);
  const ArchParams arch = ArchParams::zeros(cls);
  const Generator gen(tiny_generator());

  std::mt19937_64 rng(41);
  const Index probe = 256;
  std::vector<Index> probe_labels;
  for (Index i = 0; i < probe; ++i) probe_labels.push_back(i % 2);
  const Tensor probe_noise = sample_noise(probe, 8, rng);
  const Index pixels = 16;
  auto class_gap = [&](const WeightSet& gw) {
    const Tensor x = gen.generate(gw, probe_labels, probe_noise).images;
    Vector m0 = Vector::Zero(pixels), m1 = Vector::Zero(pixels);
    for (Index i = 0; i < probe; ++i) {
      const Eigen::Map<const Vector> row(x.data() + i * pixels, pixels);
      (i % 2 == 0 ? m0 : m1) += row / Scalar(probe / 2);
    }
    return Vector(m1 - m0);
  };
  const Vector t = Eigen::Map<const Vector>(blobs.templates.data() + pixels, pixels) -
                   Eigen::Map<const Vector>(blobs.templates.data(), pixels);

  const Vector before = class_gap(g);
  CHECK(before.norm() <= 0.25 * t.norm());

  BatchSampler sampler(blobs.data.size(), 32, 51);
  for (int step = 0; step < 500; ++step) {
    const Batch real = make_batch(blobs.data, sampler.next());
    const Tensor noise = sample_noise(32, 8, rng);
    const GanInputs in{&real.images, &real.labels, &real.labels, &noise};
    const GanStepResult r = gan_step(model, g, h, arch, in, 0.05, 0.05);
    g = r.g;
    h = r.h;
  }
  const Vector after = class_gap(g);
  const Scalar cosine = after.dot(t) / (after.norm() * t.norm());
  MESSAGE("gap before " << before.norm() << ", after " << after.norm() << ", cosine " << cosine
                        << ", template gap " << t.norm());
  CHECK(cosine >= 0.5);
  CHECK(after.dot(t) / t.norm() >= 0.25 * t.norm());
}
