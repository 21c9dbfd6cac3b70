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

#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "lfm/tensor.hpp"
#include "lfm/weights.hpp"

namespace lfm {

enum class OpKind {
  kInput,
  kParameter,
  kConstant,
  kMatMul,
  kAddBias,
  kAdd,
  kMul,
  kScale,
  kConv2d,
  kDepthwiseConv2d,
  kMaxPool,
  kAvgPool,
  kRelu,
  kTanh,
  kSigmoid,
  kSoftplus,
  kBatchNorm,
  kSoftmax,
  kLogSoftmax,
  kCrossEntropy,
  kWeightedCrossEntropy,
  kMix,
  kConcat,
  kReshape,
  kMean,
  kSum,
  kSpatialMean,
  kUpsample2x,
  kGatherRows,
};

const char* op_name(OpKind kind);

enum class Reduction { kMean, kSum };

struct ConvAttrs {
  int stride = 1;
  int pad = 0;
  int dilation = 1;
};

struct NodeRecord {
  OpKind kind = OpKind::kConstant;
  std::vector<int> inputs;
  std::string name;           // leaves only
  Shape target_shape;         // reshape; -1 entries are inferred
  ConvAttrs conv;
  int window = 3;             // pooling window
  Scalar factor = 1;          // scale
  Index row = 0;              // mix: row of the weight matrix
  std::vector<Index> slots;   // mix: column for each mixed input
  Reduction reduction = Reduction::kMean;
  Tensor constant;
};

class Graph;

// Lightweight handle to a node; free functions below compose handles into
// new nodes of the same graph.
struct Var {
  Graph* graph = nullptr;
  int id = -1;
  bool valid() const { return graph != nullptr && id >= 0; }
};

// Static computation DAG. Nodes are appended in topological order, so the
// node index is a valid evaluation order. Shapes are inferred at forward
// time, which lets one graph serve batches of different sizes.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  Var input(const std::string& name);
  Var parameter(const std::string& name);
  Var constant(Tensor value);
  Var append(NodeRecord record);

  void set_output(const std::string& name, Var v);
  Var output(const std::string& name) const;
  bool has_output(const std::string& name) const { return outputs_.contains(name); }

  const std::vector<NodeRecord>& nodes() const { return nodes_; }
  const NodeRecord& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  Var var(int id) { return Var{this, id}; }

  std::vector<std::string> parameter_names() const;
  std::vector<std::string> input_names() const;
  int find_leaf(const std::string& name) const;

 private:
  std::vector<NodeRecord> nodes_;
  std::map<std::string, int> leaves_;
  std::map<std::string, int> outputs_;
};

// Named tensors supplied to forward(); holds references, so the bound
// tensors must outlive the call.
class Bindings {
 public:
  Bindings() = default;
  Bindings& bind(const std::string& name, const Tensor& value) {
    refs_[name] = &value;
    return *this;
  }
  Bindings& bind(const TensorMap& values) {
    for (const auto& [name, value] : values) refs_[name] = &value;
    return *this;
  }
  // Bindings hold references; binding a temporary would dangle.
  Bindings& bind(const std::string&, Tensor&&) = delete;
  Bindings& bind(TensorMap&&) = delete;
  const Tensor* find(const std::string& name) const {
    auto it = refs_.find(name);
    return it == refs_.end() ? nullptr : it->second;
  }

 private:
  std::unordered_map<std::string, const Tensor*> refs_;
};

// Values produced by one forward pass; input to backward().
class Evaluation {
 public:
  Evaluation(const Graph& graph, std::vector<Tensor> values, std::vector<bool> computed)
      : graph_(&graph), values_(std::move(values)), computed_(std::move(computed)) {}

  const Graph& graph() const { return *graph_; }
  const Tensor& value(int id) const;
  const Tensor& value(Var v) const { return value(v.id); }
  const Tensor& output(const std::string& name) const { return value(graph_->output(name)); }
  bool computed(int id) const { return computed_.at(static_cast<std::size_t>(id)); }

 private:
  const Graph* graph_;
  std::vector<Tensor> values_;
  std::vector<bool> computed_;
};

// Evaluates the nodes needed by `outputs` (all declared outputs when empty).
Evaluation forward(const Graph& graph, const Bindings& bindings, const std::vector<std::string>& outputs = {});

// Reverse-mode gradients of a scalar node with respect to the named
// parameters (every parameter leaf when `wrt` is empty). Parameters the
// output does not depend on receive zero gradients.
GradientMap backward(const Evaluation& eval, Var output, const std::vector<std::string>& wrt = {},
                     Scalar seed = 1);
GradientMap backward(const Evaluation& eval, const std::string& output, const std::vector<std::string>& wrt = {},
                     Scalar seed = 1);

// ---- expression builders -------------------------------------------------

Var matmul(Var a, Var b);
Var add_bias(Var x, Var bias);
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator*(Scalar s, Var x);
Var operator-(Var x);
Var conv2d(Var x, Var weight, ConvAttrs attrs = {});
Var depthwise_conv2d(Var x, Var weight, ConvAttrs attrs = {});
Var max_pool(Var x, int window, int stride, int pad);
Var avg_pool(Var x, int window, int stride, int pad);
Var relu(Var x);
Var tanh(Var x);
Var sigmoid(Var x);
Var softplus(Var x);
Var batch_norm(Var x);
Var softmax(Var x);
Var log_softmax(Var x);
Var cross_entropy(Var logits, Var labels, Reduction reduction = Reduction::kMean);
Var weighted_cross_entropy(Var logits, Var labels, Var weights);
// Sum over k of weights[row, slots[k]] * inputs[k].
Var mix(Var weights, Index row, std::span<const Var> inputs, std::span<const Index> slots);
Var concat(std::span<const Var> parts);
Var reshape(Var x, Shape shape);
Var mean(Var x);
Var sum(Var x);
Var spatial_mean(Var x);
Var upsample2x(Var x);
Var gather_rows(Var table, Var labels);

}  // namespace lfm
