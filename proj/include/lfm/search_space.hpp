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

// Cell-based search space with a softmax relaxation over candidate ops.
//
// A cell has two input states (the outputs of the two previous cells),
// `num_nodes - 3` intermediate nodes and one output node that concatenates
// the intermediates along channels. Intermediate node i (0-based) reads
// every earlier state, so it owns i + 2 edges; edges are numbered node by
// node and, within a node, by input state.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lfm/graph.hpp"
#include "lfm/layers.hpp"

namespace lfm {

enum class OpId {
  kSepConv3x3,
  kSepConv5x5,
  kDilConv3x3,
  kDilConv5x5,
  kMaxPool3x3,
  kAvgPool3x3,
  kZero,
  kIdentity,
};

std::string_view op_id_name(OpId op);
// Throws ValidationError on an unknown name.
OpId parse_op_id(std::string_view name);

class CandidateOpSet {
 public:
  // The full eight-op set.
  CandidateOpSet();
  explicit CandidateOpSet(std::vector<OpId> ops);
  // Comma-separated op names.
  static CandidateOpSet parse(std::string_view list);

  const std::vector<OpId>& ops() const { return ops_; }
  Index size() const { return static_cast<Index>(ops_.size()); }
  OpId operator[](Index k) const { return ops_.at(static_cast<std::size_t>(k)); }
  std::optional<Index> index_of(OpId op) const;
  std::string to_string() const;
  std::uint64_t hash() const;

  friend bool operator==(const CandidateOpSet&, const CandidateOpSet&) = default;

 private:
  std::vector<OpId> ops_;
};

enum class HeadKind { kGlobalPool, kFlatten };

struct SupernetSpec {
  Index num_cells = 2;
  Index num_nodes = 5;  // per cell, counting the two inputs and the output
  Index channels = 8;
  Index num_classes = 4;
  Index input_height = 8;
  Index input_width = 8;
  Index input_channels = 1;
  bool use_reduction = false;
  Index stem_multiplier = 3;
  HeadKind head = HeadKind::kFlatten;
  CandidateOpSet ops;

  Index intermediate_nodes() const { return num_nodes - 3; }
  Index num_edges() const;
  // Reduction cells sit at one third and two thirds of the stack.
  bool is_reduction_cell(Index cell) const;
  void validate() const;
};

inline Index edges_for(Index intermediate_nodes) { return intermediate_nodes * (intermediate_nodes + 3) / 2; }
inline Index edge_index(Index node, Index input) { return node * (node + 3) / 2 + input; }

enum class CellType { kNormal, kReduce };

// Mixing logits, one row per edge and one column per candidate op.
// `reduce` is empty when the network has no reduction cells.
struct ArchParams {
  Matrix normal;
  Matrix reduce;

  static ArchParams zeros(const SupernetSpec& spec);
  // Small Gaussian logits (scale 1e-3), the usual relaxation start point.
  static ArchParams random(const SupernetSpec& spec, std::uint64_t seed, Scalar scale = Scalar(1e-3));

  const Matrix& of(CellType type) const { return type == CellType::kNormal ? normal : reduce; }
  bool has_reduce() const { return reduce.size() > 0; }
  bool all_finite() const { return normal.allFinite() && reduce.allFinite(); }

  // Graph bindings, keyed "arch.normal" and (when present) "arch.reduce".
  TensorMap tensors() const;
  static ArchParams from_tensors(const TensorMap& m);
  Vector flat() const;
  ArchParams with_flat(const Vector& v) const;
};

// Row-wise softmax.
Matrix row_softmax(const Matrix& logits);

inline constexpr const char* kArchNormal = "arch.normal";
inline constexpr const char* kArchReduce = "arch.reduce";

// Standard names of classifier graphs.
inline constexpr const char* kImages = "images";
inline constexpr const char* kLabels = "labels";
inline constexpr const char* kExampleWeights = "example_weights";
inline constexpr const char* kLogits = "logits";
inline constexpr const char* kLoss = "loss";
inline constexpr const char* kWeightedLoss = "weighted_loss";

// A classifier graph plus freshly initialized weights. Weight keys carry
// the parameter prefix so the set binds directly.
struct Network {
  Graph graph;
  WeightSet weights;
  std::string prefix;
  Index num_classes = 0;
};

// Softmax-normalized mixing weights inside a graph.
struct ArchVars {
  Var normal;
  Var reduce;
};
ArchVars declare_arch(Graph& graph, bool with_reduce);

// Stem, mixed cells and head applied to `images`; returns [N, outputs]
// logits. Call twice with the same factory prefix to share weights.
Var append_supernet(ParamFactory& pf, const SupernetSpec& spec, const ArchVars& arch, Var images, Index outputs);

// Adds the "logits", "loss" (mean cross-entropy against "labels") and
// "weighted_loss" (sum of per-example cross-entropy times
// "example_weights") outputs.
void add_classifier_outputs(Graph& graph, Var logits);

Network build_supernet(const SupernetSpec& spec, std::uint64_t seed, const std::string& prefix = "w.");

// One relaxed edge with its own op weights, evaluated on its own.
class MixedEdge {
 public:
  MixedEdge(CandidateOpSet ops, Index channels, int stride, std::uint64_t seed);

  const CandidateOpSet& ops() const { return ops_; }
  const WeightSet& weights() const { return weights_; }
  // Softmax-mixed output for one logit row.
  Tensor forward(const Vector& logits, const Tensor& input) const;
  // Output of candidate op k alone (zeros for the zero op).
  Tensor op_output(Index k, const Tensor& input) const;

 private:
  CandidateOpSet ops_;
  Graph graph_;
  WeightSet weights_;
};

Tensor mixed_op_forward(const MixedEdge& edge_ops, const ArchParams& arch, Index edge, const Tensor& input,
                        CellType type = CellType::kNormal);

struct Gene {
  Index input = 0;  // 0, 1 are the cell inputs; 2 + i is intermediate node i
  OpId op = OpId::kIdentity;
  friend bool operator==(const Gene&, const Gene&) = default;
};

struct DiscreteCell {
  std::vector<std::array<Gene, 2>> nodes;

  // Throws ValidationError when an op is zero or an input does not precede
  // its node.
  void validate() const;
  friend bool operator==(const DiscreteCell&, const DiscreteCell&) = default;
};

struct Genotype {
  DiscreteCell normal;
  std::optional<DiscreteCell> reduce;
  CandidateOpSet ops;
  std::string config_hash;

  friend bool operator==(const Genotype&, const Genotype&) = default;
};

// Keeps, per node, the two incoming edges with the largest non-zero-op
// softmax weight, each with its best non-zero op. Ties go to the lower op
// index, then the lower edge index. Retained genes are listed by input.
DiscreteCell derive_cell(const Matrix& logits, const CandidateOpSet& ops);
Genotype derive_genotype(const ArchParams& arch, const CandidateOpSet& ops, std::string config_hash = {});

// Fixed-architecture classifier: `spec.num_cells` copies of the cell.
// spec.num_nodes and spec.ops are ignored.
Network build_eval_network(const Genotype& genotype, const SupernetSpec& spec, std::uint64_t seed,
                           const std::string& prefix = "w.");

// Logits for `images` in batches of `batch` rows.
Tensor predict(const Network& net, const WeightSet& weights, const ArchParams* arch, const Tensor& images,
               Index batch = 64);

// Plain-text genotype format:
//   # lfmcw genotype v1
//   # config_hash <hex>
//   # ops <name,name,...> hash <hex>
//   normal <node> <input> <op>
//   reduce <node> <input> <op>
// Node ids count the cell inputs, so the first intermediate node is 2.
std::string format_genotype(const Genotype& genotype);
// Throws ParseError with the byte offset of the offending line.
Genotype parse_genotype(std::string_view text);

}  // namespace lfm
