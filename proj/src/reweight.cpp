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

#include "lfm/reweight.hpp"

#include <cmath>

#include "kernels.hpp"

namespace lfm {

void WeightingConfig::validate() const {
  if (!(lambda >= 0) || !std::isfinite(lambda)) throw ValidationError("lambda must be a finite value >= 0");
  if (m_policy == MPolicy::kFixedPerClass && m_per_class < 1) {
    throw ValidationError("m_per_class must be at least 1");
  }
}

std::string_view m_policy_name(MPolicy p) { return p == MPolicy::kMatchBatch ? "match_batch" : "fixed_per_class"; }

MPolicy parse_m_policy(std::string_view name) {
  if (name == "match_batch") return MPolicy::kMatchBatch;
  if (name == "fixed_per_class") return MPolicy::kFixedPerClass;
  throw ValidationError("unknown M policy '" + std::string(name) + "'");
}

std::string_view reduction_name(SyntheticReduction r) { return r == SyntheticReduction::kSum ? "sum" : "class_mean"; }

SyntheticReduction parse_reduction(std::string_view name) {
  if (name == "sum") return SyntheticReduction::kSum;
  if (name == "class_mean") return SyntheticReduction::kClassMean;
  throw ValidationError("unknown synthetic reduction '" + std::string(name) + "'");
}

Vector per_example_cross_entropy(const Tensor& logits, std::span<const Index> labels) {
  const Tensor terms = kernels::cross_entropy_terms(logits, labels_tensor(labels));
  return Eigen::Map<const Vector>(terms.data(), terms.size());
}

ClassLossVector class_losses_from_terms(const Vector& terms, std::span<const Index> labels, Index num_classes) {
  if (labels.empty()) throw ValidationError("class losses need a nonempty validation set");
  if (terms.size() != static_cast<Index>(labels.size())) throw ShapeError("class losses: term/label count mismatch");
  ClassLossVector out;
  out.values = Vector::Zero(num_classes);
  out.counts.assign(static_cast<std::size_t>(num_classes), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Index c = labels[i];
    if (c < 0 || c >= num_classes) throw ValidationError("class losses: label out of range");
    out.values[c] += terms[static_cast<Index>(i)];
    ++out.counts[static_cast<std::size_t>(c)];
  }
  out.present.resize(static_cast<std::size_t>(num_classes));
  for (Index c = 0; c < num_classes; ++c) {
    const Index n = out.counts[static_cast<std::size_t>(c)];
    out.present[static_cast<std::size_t>(c)] = n > 0;
    if (n > 0) out.values[c] /= Scalar(n);
  }
  if (!out.values.allFinite()) throw NonFiniteError("class losses are not finite");
  return out;
}

ClassLossVector class_losses(const Network& net, const WeightSet& w, const ArchParams& arch,
                             const LabeledImageSet& val, Index batch) {
  if (val.size() == 0) throw ValidationError("class losses need a nonempty validation set");
  const Tensor logits = predict(net, w, &arch, val.images, batch);
  return class_losses_from_terms(per_example_cross_entropy(logits, val.labels), val.labels, net.num_classes);
}

namespace {

Scalar present_mean(const ClassLossVector& l, Index* present_count) {
  Scalar total = 0;
  Index p = 0;
  for (Index c = 0; c < l.size(); ++c) {
    if (!l.present[static_cast<std::size_t>(c)]) continue;
    total += l.values[c];
    ++p;
  }
  *present_count = p;
  return p > 0 ? total / Scalar(p) : Scalar(0);
}

}  // namespace

Vector class_weights(const ClassLossVector& l, const WeightingConfig& cfg) {
  if (!cfg.normalize_weights) return cfg.lambda * l.values;
  Index p = 0;
  const Scalar mean = present_mean(l, &p);
  if (mean <= 0) return Vector::Zero(l.size());
  return (cfg.lambda / mean) * l.values;
}

Vector class_weights_vjp(const ClassLossVector& l, const WeightingConfig& cfg, const Vector& s) {
  Vector r = Vector::Zero(l.size());
  if (!cfg.normalize_weights) {
    for (Index k = 0; k < l.size(); ++k) {
      if (l.present[static_cast<std::size_t>(k)]) r[k] = cfg.lambda * s[k];
    }
    return r;
  }
  Index p = 0;
  const Scalar mean = present_mean(l, &p);
  if (mean <= 0) return r;
  // w_c = lambda l_c / mean(l): dw_c/dl_k = lambda (delta_ck / mean - l_c / (P mean^2)) for present k
  const Scalar coupled = s.dot(l.values) / (Scalar(p) * mean * mean);
  for (Index k = 0; k < l.size(); ++k) {
    if (l.present[static_cast<std::size_t>(k)]) r[k] = cfg.lambda * (s[k] / mean - coupled);
  }
  return r;
}

Vector synthetic_example_weights(const Vector& class_weights, std::span<const Index> synth_labels,
                                 const WeightingConfig& cfg) {
  const Index n = static_cast<Index>(synth_labels.size());
  std::vector<Index> counts(static_cast<std::size_t>(class_weights.size()), 0);
  for (Index y : synth_labels) {
    if (y < 0 || y >= class_weights.size()) throw ValidationError("synthetic label out of range");
    ++counts[static_cast<std::size_t>(y)];
  }
  Vector out(n);
  for (Index i = 0; i < n; ++i) {
    const Index y = synth_labels[static_cast<std::size_t>(i)];
    out[i] = class_weights[y];
    if (cfg.reduction == SyntheticReduction::kClassMean) out[i] /= Scalar(counts[static_cast<std::size_t>(y)]);
  }
  return out;
}

std::vector<Index> synthetic_labels(const WeightingConfig& cfg, std::span<const Index> batch_labels,
                                    Index num_classes) {
  if (cfg.m_policy == MPolicy::kMatchBatch) return {batch_labels.begin(), batch_labels.end()};
  std::vector<Index> out;
  for (Index c = 0; c < num_classes; ++c) {
    for (Index m = 0; m < cfg.m_per_class; ++m) out.push_back(c);
  }
  return out;
}

WeightedObjective weighted_objective(Scalar real_loss, const Vector& synth_terms, std::span<const Index> synth_labels,
                                     const ClassLossVector& l, const WeightingConfig& cfg) {
  if (synth_terms.size() != static_cast<Index>(synth_labels.size())) {
    throw ShapeError("weighted objective: synthetic term/label count mismatch");
  }
  WeightedObjective out;
  out.real = cfg.synthetic_only ? Scalar(0) : real_loss;
  const Vector unit = synthetic_example_weights(Vector::Ones(l.size()), synth_labels, cfg);
  out.class_synthetic = Vector::Zero(l.size());
  for (Index i = 0; i < synth_terms.size(); ++i) {
    out.class_synthetic[synth_labels[static_cast<std::size_t>(i)]] += unit[i] * synth_terms[i];
  }
  out.synthetic = class_weights(l, cfg).dot(out.class_synthetic);
  return out;
}

WeightedObjective weighted_objective(const Network& net, const WeightSet& w2, const ArchParams& arch,
                                     const Batch& real, const SyntheticBatch& synth, const ClassLossVector& l,
                                     const WeightingConfig& cfg) {
  cfg.validate();
  if (l.size() != net.num_classes) throw ShapeError("weighted objective: class-loss length mismatch");
  Scalar real_loss = 0;
  if (!cfg.synthetic_only) {
    real_loss = per_example_cross_entropy(predict(net, w2, &arch, real.images, real.images.dim(0)), real.label_ids)
                    .mean();
  }
  const Tensor logits = predict(net, w2, &arch, synth.images, synth.images.dim(0));
  return weighted_objective(real_loss, per_example_cross_entropy(logits, synth.labels), synth.labels, l, cfg);
}

}  // namespace lfm
