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

#include "lfm/cig.hpp"

#include <algorithm>

namespace lfm {
namespace {

std::vector<std::string> keys_of(const TensorMap& m) {
  std::vector<std::string> out;
  for (const auto& [k, _] : m) out.push_back(k);
  return out;
}

}  // namespace

std::string_view tier_name(GeneratorTier tier) {
  switch (tier) {
    case GeneratorTier::kTiny:
      return "tiny";
    case GeneratorTier::kSmall:
      return "small";
    case GeneratorTier::kMedium:
      return "medium";
  }
  return "?";
}

GeneratorTier parse_tier(std::string_view name) {
  for (GeneratorTier t : {GeneratorTier::kTiny, GeneratorTier::kSmall, GeneratorTier::kMedium}) {
    if (tier_name(t) == name) return t;
  }
  throw ValidationError("unknown generator tier '" + std::string(name) + "'");
}

std::vector<Index> GeneratorSpec::widths() const {
  if (!hidden.empty()) return hidden;
  switch (tier) {
    case GeneratorTier::kTiny:
      return {};
    case GeneratorTier::kSmall:
      return {64};
    case GeneratorTier::kMedium:
      return {16};
  }
  return {};
}

void GeneratorSpec::validate() const {
  if (noise_dim <= 0 || label_embedding_dim <= 0) throw ValidationError("generator: dims must be positive");
  if (num_classes < 2) throw ValidationError("generator: need at least two classes");
  if (height <= 0 || width <= 0 || channels <= 0) throw ValidationError("generator: bad output shape");
  for (Index w : widths()) {
    if (w <= 0) throw ValidationError("generator: hidden widths must be positive");
  }
  if (tier == GeneratorTier::kTiny && !hidden.empty()) {
    throw ValidationError("generator: the tiny tier has no hidden layers");
  }
  if (tier == GeneratorTier::kMedium) {
    if (height % 2 != 0 || width % 2 != 0) throw ValidationError("generator: medium tier needs even image sizes");
    if (widths().size() != 1) throw ValidationError("generator: medium tier takes one feature-map width");
  }
}

Var append_generator(ParamFactory& pf, const GeneratorSpec& spec, Var labels, Var noise) {
  spec.validate();
  const Index out = spec.height * spec.width * spec.channels;
  Var embed = gather_rows(pf.uniform("label_embed", {spec.num_classes, spec.label_embedding_dim}, 1), labels);
  std::vector<Var> parts{embed, noise};
  Var x = concat(parts);
  Index width = spec.label_embedding_dim + spec.noise_dim;
  const std::vector<Index> widths = spec.widths();
  switch (spec.tier) {
    case GeneratorTier::kTiny:
    case GeneratorTier::kSmall: {
      for (std::size_t i = 0; i < widths.size(); ++i) {
        x = relu(linear(pf, x, "fc" + std::to_string(i), width, widths[i]));
        width = widths[i];
      }
      x = tanh(linear(pf, x, "out", width, out));
      return reshape(x, {-1, spec.height, spec.width, spec.channels});
    }
    case GeneratorTier::kMedium: {
      const Index f = widths.front();
      const Index h2 = spec.height / 2, w2 = spec.width / 2;
      x = relu(linear(pf, x, "fc0", width, h2 * w2 * f));
      x = upsample2x(reshape(x, {-1, h2, w2, f}));
      x = relu(conv2d(x, pf.conv_weight("conv1", 3, f, f), {1, 1, 1}));
      return tanh(conv2d(x, pf.conv_weight("conv2", 3, f, spec.channels), {1, 1, 1}));
    }
  }
  throw Error("unknown generator tier");
}

Tensor sample_noise(Index n, Index dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Tensor t({n, dim});
  for (Index i = 0; i < t.size(); ++i) t[i] = Scalar(normal(rng));
  return t;
}

Generator::Generator(GeneratorSpec spec, const std::string& prefix) : spec_(std::move(spec)), prefix_(prefix) {
  ParamFactory pf(graph_, prefix_);
  graph_.set_output("images", append_generator(pf, spec_, graph_.input("labels"), graph_.input("noise")));
}

WeightSet Generator::init(std::uint64_t seed) const {
  Graph scratch;
  WeightSet g;
  ParamFactory pf(scratch, prefix_, &g, seed);
  append_generator(pf, spec_, scratch.input("labels"), scratch.input("noise"));
  return g;
}

SyntheticBatch Generator::generate(const WeightSet& g, std::span<const Index> labels, const Tensor& noise) const {
  const Index n = static_cast<Index>(labels.size());
  if (noise.rank() != 2 || noise.dim(0) != n || noise.dim(1) != spec_.noise_dim) {
    throw ShapeError("generate: noise must be [" + std::to_string(n) + ", " + std::to_string(spec_.noise_dim) +
                     "], got " + shape_string(noise.shape()));
  }
  Tensor label_t({n});
  for (Index i = 0; i < n; ++i) {
    const Index y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= spec_.num_classes) throw ValidationError("generate: label " + std::to_string(y) + " out of range");
    label_t[i] = Scalar(y);
  }
  Bindings b;
  b.bind(g).bind("labels", label_t).bind("noise", noise);
  SyntheticBatch out;
  out.images = forward(graph_, b, {"images"}).output("images");
  out.labels.assign(labels.begin(), labels.end());
  out.noise = noise;
  return out;
}

SupernetSpec discriminator_spec(const SupernetSpec& classifier) {
  SupernetSpec s = classifier;
  s.input_channels += 1;
  return s;
}

Var append_discriminator(ParamFactory& pf, const SupernetSpec& classifier, const ArchVars& arch, Var images,
                         Var labels) {
  const SupernetSpec spec = discriminator_spec(classifier);
  const Index hw = spec.input_height * spec.input_width;
  Var plane = gather_rows(pf.uniform("label_plane", {spec.num_classes, hw}, 1), labels);
  std::vector<Var> parts{images, reshape(plane, {-1, spec.input_height, spec.input_width, 1})};
  return append_supernet(pf, spec, arch, concat(parts), 1);
}

Discriminator build_discriminator(const SupernetSpec& classifier, std::uint64_t seed, const std::string& prefix) {
  Discriminator d;
  ParamFactory pf(d.graph, prefix, &d.weights, seed);
  const ArchVars arch = declare_arch(d.graph, classifier.use_reduction);
  Var logit = append_discriminator(pf, classifier, arch, d.graph.input("images"), d.graph.input("labels"));
  d.graph.set_output("logit", logit);
  d.graph.set_output("prob", sigmoid(logit));
  return d;
}

GanModel::GanModel(const SupernetSpec& classifier, GeneratorSpec generator, GanOptions options)
    : cls_spec_(classifier), gen_spec_(std::move(generator)), options_(options) {
  if (gen_spec_.height != cls_spec_.input_height || gen_spec_.width != cls_spec_.input_width ||
      gen_spec_.channels != cls_spec_.input_channels || gen_spec_.num_classes != cls_spec_.num_classes) {
    throw ValidationError("generator output shape or class count does not match the classifier input");
  }
  Graph& g = graph_;
  ParamFactory gen(g, "g.");
  ParamFactory disc(g, "h.");
  const ArchVars arch = declare_arch(g, cls_spec_.use_reduction);
  Var fake_labels = g.input("fake_labels");
  Var fake = append_generator(gen, gen_spec_, fake_labels, g.input("noise"));
  Var real_logit = append_discriminator(disc, cls_spec_, arch, g.input("real_images"), g.input("real_labels"));
  Var fake_logit = append_discriminator(disc, cls_spec_, arch, fake, fake_labels);
  // log D = -softplus(-l), log(1 - D) = -softplus(l)
  Var objective = Scalar(-1) * (mean(softplus(-real_logit)) + mean(softplus(fake_logit)));
  g.set_output("objective", objective);
  g.set_output("gen_objective", options_.non_saturating ? mean(softplus(-fake_logit)) : objective);
}

WeightSet GanModel::init_generator(std::uint64_t seed) const {
  Graph scratch;
  WeightSet out;
  ParamFactory pf(scratch, "g.", &out, seed);
  append_generator(pf, gen_spec_, scratch.input("l"), scratch.input("n"));
  return out;
}

WeightSet GanModel::init_discriminator(std::uint64_t seed) const { return build_discriminator(cls_spec_, seed).weights; }

GanEvaluation GanModel::evaluate(const WeightSet& g, const WeightSet& h, const TensorMap& arch, const GanInputs& in,
                                 bool want_g, bool want_h, bool want_arch) const {
  if (in.real_images == nullptr || in.real_labels == nullptr || in.fake_labels == nullptr || in.noise == nullptr) {
    throw ValidationError("gan: missing batch tensors");
  }
  if (in.real_labels->size() == 0 || in.fake_labels->size() == 0) throw ValidationError("gan: empty batch");
  Bindings b;
  b.bind(g).bind(h).bind(arch);
  b.bind("real_images", *in.real_images).bind("real_labels", *in.real_labels);
  b.bind("fake_labels", *in.fake_labels).bind("noise", *in.noise);
  const Evaluation eval = forward(graph_, b);

  GanEvaluation out;
  out.objective = eval.output("objective").item();
  out.generator_objective = eval.output("gen_objective").item();
  const std::vector<std::string> g_keys = keys_of(g), h_keys = keys_of(h), a_keys = keys_of(arch);

  std::vector<std::string> gen_wrt;
  if (want_g) gen_wrt.insert(gen_wrt.end(), g_keys.begin(), g_keys.end());
  if (want_arch) gen_wrt.insert(gen_wrt.end(), a_keys.begin(), a_keys.end());
  auto take = [](GradientMap& from, const std::vector<std::string>& keys) {
    GradientMap part;
    for (const auto& k : keys) part.emplace(k, std::move(from.at(k)));
    return part;
  };
  if (!options_.non_saturating && want_h) {
    std::vector<std::string> all = gen_wrt;
    all.insert(all.end(), h_keys.begin(), h_keys.end());
    GradientMap grad = backward(eval, "objective", all);
    out.d_h = take(grad, h_keys);
    if (want_g) out.d_g = take(grad, g_keys);
    if (want_arch) out.d_arch = take(grad, a_keys);
  } else {
    if (!gen_wrt.empty()) {
      GradientMap grad = backward(eval, "gen_objective", gen_wrt);
      if (want_g) out.d_g = take(grad, g_keys);
      if (want_arch) out.d_arch = take(grad, a_keys);
    }
    if (want_h) out.d_h = backward(eval, "objective", h_keys);
  }
  for (const auto* m : {&out.d_g, &out.d_h, &out.d_arch}) {
    if (!all_finite(*m)) throw NonFiniteError("gan: non-finite gradient");
  }
  return out;
}

GanStepResult gan_step(const GanModel& model, const WeightSet& g, const WeightSet& h, const ArchParams& arch,
                       const GanInputs& in, Scalar xi_g, Scalar xi_h) {
  const GanEvaluation e = model.evaluate(g, h, arch.tensors(), in);
  GanStepResult r;
  r.g = axpy(g, -xi_g, e.d_g);
  r.h = axpy(h, xi_h, e.d_h);
  r.objective = e.objective;
  r.generator_objective = e.generator_objective;
  return r;
}

}  // namespace lfm
