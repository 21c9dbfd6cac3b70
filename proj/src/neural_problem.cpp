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

#include "lfm/neural_problem.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <string>

namespace lfm {
namespace {

// Random streams of one run.
enum Stream : std::uint32_t {
  kTrainStream = 1,
  kCigStream,
  kValStream,
  kClassValStream,
  kGanNoiseStream,
  kSynthNoiseStream,
  kW1Init,
  kW2Init,
  kGInit,
  kHInit,
  kArchInit,
};

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint32_t stream, std::uint64_t counter) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream,
                    static_cast<std::uint32_t>(counter), static_cast<std::uint32_t>(counter >> 32)};
  return std::mt19937_64(seq);
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint32_t stream) { return stream_rng(seed, stream, 0)(); }

// Batches per epoch for n examples; a short final batch is dropped.
Index epoch_batches(Index n, Index batch) { return std::max<Index>(1, n / batch); }

// Batch `step` of a stream: epoch-wise permutations, seeded per epoch.
std::vector<Index> stream_batch(Index n, Index batch, std::uint64_t seed, std::uint32_t stream, Index step) {
  const Index per_epoch = epoch_batches(n, batch);
  const Index size = std::min(batch, n);
  const Index epoch = step / per_epoch, b = step % per_epoch;
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index(0));
  std::mt19937_64 rng = stream_rng(seed, stream, static_cast<std::uint64_t>(epoch));
  std::shuffle(order.begin(), order.end(), rng);
  return {order.begin() + b * size, order.begin() + (b + 1) * size};
}

std::string class_loss_name(Index c) { return "class_loss_" + std::to_string(c); }
std::string class_mask_name(Index c) { return "class_mask_" + std::to_string(c); }

std::vector<std::string> keys_of(const TensorMap& m) {
  std::vector<std::string> keys;
  for (const auto& [k, v] : m) keys.push_back(k);
  return keys;
}

TensorMap take(const GradientMap& grad, const std::vector<std::string>& keys) {
  TensorMap out;
  for (const auto& k : keys) out.emplace(k, grad.at(k));
  return out;
}

Vector arch_flat(const GradientMap& grad, const std::vector<std::string>& keys) {
  return ArchParams::from_tensors(take(grad, keys)).flat();
}

// Sum of the gradient parts a caller asked for.
struct Wanted {
  std::vector<std::string> wrt;
  void add_if(bool want, const std::vector<std::string>& keys) {
    if (want) wrt.insert(wrt.end(), keys.begin(), keys.end());
  }
};

}  // namespace

void NeuralProblemSpec::validate() const {
  supernet.validate();
  generator.validate();
  weighting.validate();
  if (batch < 1) throw ValidationError("batch size must be >= 1");
  if (generator.num_classes != supernet.num_classes || generator.height != supernet.input_height ||
      generator.width != supernet.input_width || generator.channels != supernet.input_channels) {
    throw ValidationError("generator output must match the classifier input shape and class count");
  }
}

NeuralTrilevelProblem::NeuralTrilevelProblem(NeuralProblemSpec spec, LabeledImageSet train, LabeledImageSet val)
    : spec_((spec.validate(), std::move(spec))),
      train_(std::move(train)),
      val_(std::move(val)),
      gan_model_(spec_.supernet, spec_.generator, spec_.gan) {
  const SupernetSpec& s = spec_.supernet;
  for (const LabeledImageSet* d : {&train_, &val_}) {
    d->validate();
    if (d->size() == 0) throw ValidationError("training and validation sets must be nonempty");
    if (d->num_classes != s.num_classes || d->height() != s.input_height || d->width() != s.input_width ||
        d->channels() != s.input_channels) {
      throw ValidationError("dataset shape or class count does not match the supernet");
    }
  }

  classifier_ = build_supernet(s, stream_seed(spec_.seed, kW1Init));
  Graph& cg = classifier_.graph;
  const Var logits = cg.output(kLogits);
  const Var labels = cg.input(kLabels);
  for (Index c = 0; c < s.num_classes; ++c) {
    cg.set_output(class_loss_name(c), weighted_cross_entropy(logits, labels, cg.input(class_mask_name(c))));
  }

  // Generator feeding the classifier, for the synthetic term.
  {
    Graph& g = synthetic_graph_;
    ParamFactory gen(g, "g.");
    ParamFactory cls(g, classifier_.prefix);
    const ArchVars arch = declare_arch(g, s.use_reduction);
    Var syn_labels = g.input(kLabels);
    Var fake = append_generator(gen, spec_.generator, syn_labels, g.input("noise"));
    add_classifier_outputs(g, append_supernet(cls, s, arch, fake, s.num_classes));
  }

  arch_template_ = ArchParams::zeros(s);
  w_template_ = classifier_.weights;
  g_template_ = gan_model_.init_generator(0);
  h_template_ = gan_model_.init_discriminator(0);
}

Index NeuralTrilevelProblem::batches_per_epoch() const { return epoch_batches(train_.size(), spec_.batch); }

ArchParams NeuralTrilevelProblem::initial_arch(Scalar scale) const {
  return ArchParams::random(spec_.supernet, stream_seed(spec_.seed, kArchInit), scale);
}

TrilevelState NeuralTrilevelProblem::initial_state(const TrilevelOptions& options, Scalar arch_scale) const {
  const Vector w1 = flatten(classifier_.weights);
  const Vector w2 = flatten(build_supernet(spec_.supernet, stream_seed(spec_.seed, kW2Init)).weights);
  const Vector g = flatten(gan_model_.init_generator(stream_seed(spec_.seed, kGInit)));
  const Vector h = flatten(gan_model_.init_discriminator(stream_seed(spec_.seed, kHInit)));
  return TrilevelState::create(initial_arch(arch_scale).flat(), w1, w2, g, h, options);
}

ProblemDims NeuralTrilevelProblem::dims() const {
  return {arch_template_.flat().size(), total_size(w_template_), total_size(g_template_), total_size(h_template_),
          spec_.supernet.num_classes};
}

void NeuralTrilevelProblem::begin_iteration(Index step) {
  if (step < 0) throw ValidationError("iteration index must be >= 0");
  const std::uint64_t seed = spec_.seed;
  const Index b = spec_.batch;
  IterationBatches& x = batches_;
  x.train = make_batch(train_, stream_batch(train_.size(), b, seed, kTrainStream, step));
  x.cig = make_batch(train_, stream_batch(train_.size(), b, seed, kCigStream, step));
  x.val = make_batch(val_, stream_batch(val_.size(), b, seed, kValStream, step));
  x.class_val = make_batch(val_, stream_batch(val_.size(), b, seed, kClassValStream, step));
  const Index noise_dim = spec_.generator.noise_dim;
  std::mt19937_64 gan_rng = stream_rng(seed, kGanNoiseStream, static_cast<std::uint64_t>(step));
  x.gan_noise = sample_noise(x.cig.images.dim(0), noise_dim, gan_rng);
  x.synth_label_ids = synthetic_labels(spec_.weighting, x.train.label_ids, spec_.supernet.num_classes);
  x.synth_labels = labels_tensor(x.synth_label_ids);
  std::mt19937_64 syn_rng = stream_rng(seed, kSynthNoiseStream, static_cast<std::uint64_t>(step));
  x.synth_noise = sample_noise(static_cast<Index>(x.synth_label_ids.size()), noise_dim, syn_rng);
  has_batches_ = true;
}

LossGrad NeuralTrilevelProblem::batch_loss(const Batch& batch, const Vector& a, const Vector& w,
                                           unsigned need) const {
  if (!has_batches_) throw ValidationError("begin_iteration() must run before evaluating losses");
  const TensorMap arch = arch_from(a).tensors();
  const WeightSet weights = weights_from(w);
  Bindings bind;
  bind.bind(arch).bind(weights).bind(kImages, batch.images).bind(kLabels, batch.labels);
  const Evaluation eval = forward(classifier_.graph, bind, {kLoss});
  LossGrad out;
  out.value = eval.output(kLoss).item();
  const std::vector<std::string> a_keys = keys_of(arch), w_keys = keys_of(weights);
  Wanted want;
  want.add_if(need & kNeedArch, a_keys);
  want.add_if(need & kNeedW, w_keys);
  if (!want.wrt.empty()) {
    const GradientMap grad = backward(eval, kLoss, want.wrt);
    if (need & kNeedArch) out.d_arch = arch_flat(grad, a_keys);
    if (need & kNeedW) out.d_w = flatten(take(grad, w_keys));
  }
  return out;
}

LossGrad NeuralTrilevelProblem::train_loss(const Vector& a, const Vector& w, unsigned need) const {
  return batch_loss(batches_.train, a, w, need);
}

LossGrad NeuralTrilevelProblem::val_loss(const Vector& a, const Vector& w, unsigned need) const {
  return batch_loss(batches_.val, a, w, need);
}

ClassLossGrads NeuralTrilevelProblem::class_losses(const Vector& a, const Vector& w1, bool want_grads) const {
  if (!has_batches_) throw ValidationError("begin_iteration() must run before evaluating losses");
  const Index C = spec_.supernet.num_classes;
  const Batch& batch = batches_.class_val;
  const Index n = batch.images.dim(0);

  ClassLossGrads out;
  out.l.values = Vector::Zero(C);
  out.l.counts.assign(static_cast<std::size_t>(C), 0);
  out.l.present.assign(static_cast<std::size_t>(C), false);
  for (Index y : batch.label_ids) ++out.l.counts[static_cast<std::size_t>(y)];

  // One forward pass over the mixed batch; class c's loss averages the
  // cross-entropy of its rows through a 1/n_c mask.
  std::vector<Tensor> masks(static_cast<std::size_t>(C), Tensor({n}));
  for (Index i = 0; i < n; ++i) {
    const Index y = batch.label_ids[static_cast<std::size_t>(i)];
    masks[static_cast<std::size_t>(y)][i] = Scalar(1) / Scalar(out.l.counts[static_cast<std::size_t>(y)]);
  }
  const TensorMap arch = arch_from(a).tensors();
  const WeightSet weights = weights_from(w1);
  Bindings bind;
  bind.bind(arch).bind(weights).bind(kImages, batch.images).bind(kLabels, batch.labels);
  std::vector<std::string> outputs;
  for (Index c = 0; c < C; ++c) {
    bind.bind(class_mask_name(c), masks[static_cast<std::size_t>(c)]);
    outputs.push_back(class_loss_name(c));
  }
  const Evaluation eval = forward(classifier_.graph, bind, outputs);

  const std::vector<std::string> a_keys = keys_of(arch), w_keys = keys_of(weights);
  std::vector<std::string> wrt = a_keys;
  wrt.insert(wrt.end(), w_keys.begin(), w_keys.end());
  for (Index c = 0; c < C; ++c) {
    const auto k = static_cast<std::size_t>(c);
    out.l.present[k] = out.l.counts[k] > 0;
    out.l.values[c] = eval.output(class_loss_name(c)).item();
    if (!want_grads) continue;
    if (!out.l.present[k]) {
      out.d_arch.push_back(Vector::Zero(a.size()));
      out.d_w.push_back(Vector::Zero(w1.size()));
      continue;
    }
    const GradientMap grad = backward(eval, class_loss_name(c), wrt);
    out.d_arch.push_back(arch_flat(grad, a_keys));
    out.d_w.push_back(flatten(take(grad, w_keys)));
  }
  if (!out.l.values.allFinite()) throw NonFiniteError("non-finite class loss");
  return out;
}

SyntheticEval NeuralTrilevelProblem::synthetic_loss(const Vector& a, const Vector& w2, const Vector& g,
                                                    const Vector& weights, unsigned need) const {
  if (!has_batches_) throw ValidationError("begin_iteration() must run before evaluating losses");
  const Index C = spec_.supernet.num_classes;
  if (weights.size() != C) throw ShapeError("synthetic loss: one weight per class");
  const std::vector<Index>& labels = batches_.synth_label_ids;
  const Vector ex = synthetic_example_weights(weights, labels, spec_.weighting);
  Tensor ex_t({ex.size()});
  ex_t.array() = ex.array();

  const TensorMap arch = arch_from(a).tensors();
  const WeightSet wset = weights_from(w2), gset = generator_from(g);
  Bindings bind;
  bind.bind(arch).bind(wset).bind(gset);
  bind.bind(kLabels, batches_.synth_labels).bind("noise", batches_.synth_noise).bind(kExampleWeights, ex_t);
  const Evaluation eval = forward(synthetic_graph_, bind, {kLogits, kWeightedLoss});

  SyntheticEval out;
  out.value = eval.output(kWeightedLoss).item();
  // S_c from the same logits under the configured reduction.
  const Vector terms = per_example_cross_entropy(eval.output(kLogits), labels);
  const Vector unit = synthetic_example_weights(Vector::Ones(C), labels, spec_.weighting);
  out.class_values = Vector::Zero(C);
  for (Index i = 0; i < terms.size(); ++i) out.class_values[labels[static_cast<std::size_t>(i)]] += unit[i] * terms[i];

  const std::vector<std::string> a_keys = keys_of(arch), w_keys = keys_of(wset), g_keys = keys_of(gset);
  Wanted want;
  want.add_if(need & kNeedArch, a_keys);
  want.add_if(need & kNeedW, w_keys);
  want.add_if(need & kNeedG, g_keys);
  if (!want.wrt.empty()) {
    const GradientMap grad = backward(eval, kWeightedLoss, want.wrt);
    if (need & kNeedArch) out.d_arch = arch_flat(grad, a_keys);
    if (need & kNeedW) out.d_w = flatten(take(grad, w_keys));
    if (need & kNeedG) out.d_g = flatten(take(grad, g_keys));
  }
  return out;
}

GanEval NeuralTrilevelProblem::gan(const Vector& a, const Vector& g, const Vector& h, unsigned need) const {
  if (!has_batches_) throw ValidationError("begin_iteration() must run before evaluating losses");
  const Batch& cig = batches_.cig;
  GanInputs in;
  in.real_images = &cig.images;
  in.real_labels = &cig.labels;
  in.fake_labels = &cig.labels;
  in.noise = &batches_.gan_noise;
  const TensorMap arch = arch_from(a).tensors();
  const GanEvaluation e = gan_model_.evaluate(generator_from(g), discriminator_from(h), arch, in, need & kNeedG,
                                              need & kNeedH, need & kNeedArch);
  GanEval out;
  out.objective = e.objective;
  out.generator_objective = e.generator_objective;
  if (need & kNeedG) out.d_g = flatten(e.d_g);
  if (need & kNeedH) out.d_h = flatten(e.d_h);
  if (need & kNeedArch) out.d_arch = ArchParams::from_tensors(e.d_arch).flat();
  return out;
}

NeuralTrilevelProblem make_tiny_problem(const WeightingConfig& weighting, std::uint64_t seed) {
  NeuralProblemSpec s;
  SupernetSpec& n = s.supernet;
  n.num_cells = 1;
  n.num_nodes = 4;
  n.channels = 2;
  n.stem_multiplier = 1;
  n.num_classes = 2;
  n.input_height = n.input_width = 4;
  n.ops = CandidateOpSet({OpId::kSepConv3x3, OpId::kMaxPool3x3, OpId::kIdentity, OpId::kZero});
  GeneratorSpec& g = s.generator;
  g.num_classes = 2;
  g.height = g.width = 4;
  g.tier = GeneratorTier::kTiny;
  g.noise_dim = 2;
  g.label_embedding_dim = 2;
  s.weighting = weighting;
  s.batch = 8;
  s.seed = seed;
  BlobOptions b;
  b.num_classes = 2;
  b.per_class = 8;
  b.height = b.width = 4;
  b.separation = 2;
  b.seed = seed;
  LabeledImageSet train = synth_blobs(b).data;
  b.seed = seed + 1;
  LabeledImageSet val = synth_blobs(b).data;
  return NeuralTrilevelProblem(std::move(s), std::move(train), std::move(val));
}

}  // namespace lfm
