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

#include "lfm/graph.hpp"

#include <cmath>
#include <sstream>

#include "kernels.hpp"

namespace lfm {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kInput: return "input";
    case OpKind::kParameter: return "parameter";
    case OpKind::kConstant: return "constant";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kAddBias: return "add_bias";
    case OpKind::kAdd: return "add";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kDepthwiseConv2d: return "depthwise_conv2d";
    case OpKind::kMaxPool: return "max_pool";
    case OpKind::kAvgPool: return "avg_pool";
    case OpKind::kRelu: return "relu";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kSoftplus: return "softplus";
    case OpKind::kBatchNorm: return "batch_norm";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kLogSoftmax: return "log_softmax";
    case OpKind::kCrossEntropy: return "cross_entropy";
    case OpKind::kWeightedCrossEntropy: return "weighted_cross_entropy";
    case OpKind::kMix: return "mix";
    case OpKind::kConcat: return "concat";
    case OpKind::kReshape: return "reshape";
    case OpKind::kMean: return "mean";
    case OpKind::kSum: return "sum";
    case OpKind::kSpatialMean: return "spatial_mean";
    case OpKind::kUpsample2x: return "upsample2x";
    case OpKind::kGatherRows: return "gather_rows";
  }
  return "?";
}

// ---- Graph ---------------------------------------------------------------

Var Graph::append(NodeRecord record) {
  for (int in : record.inputs) {
    if (in < 0 || in >= static_cast<int>(nodes_.size())) throw Error("graph: dangling input reference");
  }
  nodes_.push_back(std::move(record));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::input(const std::string& name) {
  if (auto it = leaves_.find(name); it != leaves_.end()) {
    if (nodes_[static_cast<std::size_t>(it->second)].kind != OpKind::kInput) {
      throw Error("graph: '" + name + "' already declared as a parameter");
    }
    return Var{this, it->second};
  }
  NodeRecord r;
  r.kind = OpKind::kInput;
  r.name = name;
  Var v = append(std::move(r));
  leaves_[name] = v.id;
  return v;
}

Var Graph::parameter(const std::string& name) {
  if (auto it = leaves_.find(name); it != leaves_.end()) {
    if (nodes_[static_cast<std::size_t>(it->second)].kind != OpKind::kParameter) {
      throw Error("graph: '" + name + "' already declared as an input");
    }
    return Var{this, it->second};
  }
  NodeRecord r;
  r.kind = OpKind::kParameter;
  r.name = name;
  Var v = append(std::move(r));
  leaves_[name] = v.id;
  return v;
}

Var Graph::constant(Tensor value) {
  NodeRecord r;
  r.kind = OpKind::kConstant;
  r.constant = std::move(value);
  return append(std::move(r));
}

void Graph::set_output(const std::string& name, Var v) {
  if (v.graph != this) throw Error("graph: output '" + name + "' belongs to another graph");
  outputs_[name] = v.id;
}

Var Graph::output(const std::string& name) const {
  auto it = outputs_.find(name);
  if (it == outputs_.end()) throw Error("graph: no output named '" + name + "'");
  return Var{const_cast<Graph*>(this), it->second};
}

std::vector<std::string> Graph::parameter_names() const {
  std::vector<std::string> names;
  for (const auto& [name, id] : leaves_) {
    if (nodes_[static_cast<std::size_t>(id)].kind == OpKind::kParameter) names.push_back(name);
  }
  return names;
}

std::vector<std::string> Graph::input_names() const {
  std::vector<std::string> names;
  for (const auto& [name, id] : leaves_) {
    if (nodes_[static_cast<std::size_t>(id)].kind == OpKind::kInput) names.push_back(name);
  }
  return names;
}

int Graph::find_leaf(const std::string& name) const {
  auto it = leaves_.find(name);
  return it == leaves_.end() ? -1 : it->second;
}

const Tensor& Evaluation::value(int id) const {
  if (!computed(id)) throw Error("evaluation: node " + std::to_string(id) + " was not computed");
  return values_[static_cast<std::size_t>(id)];
}

// ---- builders ------------------------------------------------------------

namespace {

Graph& owner(Var a) {
  if (!a.valid()) throw Error("graph: invalid variable");
  return *a.graph;
}

Graph& owner(Var a, Var b) {
  if (a.graph != b.graph) throw Error("graph: operands belong to different graphs");
  return owner(a);
}

Var unary(OpKind kind, Var x) {
  NodeRecord r;
  r.kind = kind;
  r.inputs = {x.id};
  return owner(x).append(std::move(r));
}

Var binary(OpKind kind, Var a, Var b) {
  NodeRecord r;
  r.kind = kind;
  r.inputs = {a.id, b.id};
  return owner(a, b).append(std::move(r));
}

}  // namespace

Var matmul(Var a, Var b) { return binary(OpKind::kMatMul, a, b); }
Var add_bias(Var x, Var bias) { return binary(OpKind::kAddBias, x, bias); }
Var operator+(Var a, Var b) { return binary(OpKind::kAdd, a, b); }
Var operator*(Var a, Var b) { return binary(OpKind::kMul, a, b); }
Var operator-(Var a, Var b) { return a + (Scalar(-1) * b); }
Var operator-(Var x) { return Scalar(-1) * x; }

Var operator*(Scalar s, Var x) {
  NodeRecord r;
  r.kind = OpKind::kScale;
  r.inputs = {x.id};
  r.factor = s;
  return owner(x).append(std::move(r));
}

Var conv2d(Var x, Var weight, ConvAttrs attrs) {
  NodeRecord r;
  r.kind = OpKind::kConv2d;
  r.inputs = {x.id, weight.id};
  r.conv = attrs;
  return owner(x, weight).append(std::move(r));
}

Var depthwise_conv2d(Var x, Var weight, ConvAttrs attrs) {
  NodeRecord r;
  r.kind = OpKind::kDepthwiseConv2d;
  r.inputs = {x.id, weight.id};
  r.conv = attrs;
  return owner(x, weight).append(std::move(r));
}

Var max_pool(Var x, int window, int stride, int pad) {
  NodeRecord r;
  r.kind = OpKind::kMaxPool;
  r.inputs = {x.id};
  r.window = window;
  r.conv = {stride, pad, 1};
  return owner(x).append(std::move(r));
}

Var avg_pool(Var x, int window, int stride, int pad) {
  NodeRecord r;
  r.kind = OpKind::kAvgPool;
  r.inputs = {x.id};
  r.window = window;
  r.conv = {stride, pad, 1};
  return owner(x).append(std::move(r));
}

Var relu(Var x) { return unary(OpKind::kRelu, x); }
Var tanh(Var x) { return unary(OpKind::kTanh, x); }
Var sigmoid(Var x) { return unary(OpKind::kSigmoid, x); }
Var softplus(Var x) { return unary(OpKind::kSoftplus, x); }
Var batch_norm(Var x) { return unary(OpKind::kBatchNorm, x); }
Var softmax(Var x) { return unary(OpKind::kSoftmax, x); }
Var log_softmax(Var x) { return unary(OpKind::kLogSoftmax, x); }
Var mean(Var x) { return unary(OpKind::kMean, x); }
Var sum(Var x) { return unary(OpKind::kSum, x); }
Var spatial_mean(Var x) { return unary(OpKind::kSpatialMean, x); }
Var upsample2x(Var x) { return unary(OpKind::kUpsample2x, x); }
Var gather_rows(Var table, Var labels) { return binary(OpKind::kGatherRows, table, labels); }

Var cross_entropy(Var logits, Var labels, Reduction reduction) {
  NodeRecord r;
  r.kind = OpKind::kCrossEntropy;
  r.inputs = {logits.id, labels.id};
  r.reduction = reduction;
  return owner(logits, labels).append(std::move(r));
}

Var weighted_cross_entropy(Var logits, Var labels, Var weights) {
  NodeRecord r;
  r.kind = OpKind::kWeightedCrossEntropy;
  r.inputs = {logits.id, labels.id, weights.id};
  owner(logits, labels);
  return owner(logits, weights).append(std::move(r));
}

Var mix(Var weights, Index row, std::span<const Var> inputs, std::span<const Index> slots) {
  if (inputs.size() != slots.size()) throw Error("mix: one slot per input required");
  NodeRecord r;
  r.kind = OpKind::kMix;
  r.inputs.push_back(weights.id);
  for (Var v : inputs) {
    owner(weights, v);
    r.inputs.push_back(v.id);
  }
  r.row = row;
  r.slots.assign(slots.begin(), slots.end());
  return owner(weights).append(std::move(r));
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw Error("concat: no inputs");
  NodeRecord r;
  r.kind = OpKind::kConcat;
  for (Var v : parts) {
    owner(parts.front(), v);
    r.inputs.push_back(v.id);
  }
  return owner(parts.front()).append(std::move(r));
}

Var reshape(Var x, Shape shape) {
  NodeRecord r;
  r.kind = OpKind::kReshape;
  r.inputs = {x.id};
  r.target_shape = std::move(shape);
  return owner(x).append(std::move(r));
}

// ---- forward -------------------------------------------------------------

namespace {

Shape infer_reshape(const Shape& target, Index size) {
  Shape out = target;
  Index known = 1;
  int unknown = -1;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] < 0) {
      if (unknown >= 0) throw ShapeError("reshape: more than one inferred dimension");
      unknown = static_cast<int>(i);
    } else {
      known *= out[i];
    }
  }
  if (unknown >= 0) {
    if (known == 0 || size % known != 0) throw ShapeError("reshape: cannot infer dimension");
    out[static_cast<std::size_t>(unknown)] = size / known;
  }
  if (num_elements(out) != size) {
    throw ShapeError("reshape: " + std::to_string(size) + " elements into " + shape_string(out));
  }
  return out;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

Tensor eval_node(const NodeRecord& n, const std::vector<Tensor>& v, const Bindings& bindings) {
  auto in = [&](std::size_t k) -> const Tensor& { return v[static_cast<std::size_t>(n.inputs[k])]; };
  switch (n.kind) {
    case OpKind::kInput:
    case OpKind::kParameter: {
      const Tensor* t = bindings.find(n.name);
      if (!t) throw Error(std::string("forward: no binding for ") + op_name(n.kind) + " '" + n.name + "'");
      return *t;
    }
    case OpKind::kConstant: return n.constant;
    case OpKind::kMatMul: return kernels::matmul(in(0), in(1));
    case OpKind::kAddBias: {
      const Tensor& x = in(0);
      const Tensor& b = in(1);
      if (x.rank() < 1 || b.rank() != 1 || x.shape().back() != b.size()) {
        throw ShapeError("add_bias: " + shape_string(x.shape()) + " + " + shape_string(b.shape()));
      }
      Tensor y = x;
      const Index c = b.size();
      y.matrix(x.size() / c, c).rowwise() += b.matrix(1, c).row(0);
      return y;
    }
    case OpKind::kAdd: {
      require_same_shape(in(0), in(1), "add");
      return Tensor(in(0).shape(), in(0).array() + in(1).array());
    }
    case OpKind::kMul: {
      require_same_shape(in(0), in(1), "mul");
      return Tensor(in(0).shape(), in(0).array() * in(1).array());
    }
    case OpKind::kScale: return Tensor(in(0).shape(), in(0).array() * n.factor);
    case OpKind::kConv2d: return kernels::conv2d(in(0), in(1), n.conv);
    case OpKind::kDepthwiseConv2d: return kernels::depthwise_conv2d(in(0), in(1), n.conv);
    case OpKind::kMaxPool: return kernels::max_pool(in(0), n.window, n.conv);
    case OpKind::kAvgPool: return kernels::avg_pool(in(0), n.window, n.conv);
    case OpKind::kRelu: return Tensor(in(0).shape(), in(0).array().max(Scalar(0)));
    case OpKind::kTanh: return Tensor(in(0).shape(), in(0).array().tanh());
    case OpKind::kSigmoid: return Tensor(in(0).shape(), Scalar(1) / (Scalar(1) + (-in(0).array()).exp()));
    case OpKind::kSoftplus: {
      // max(x, 0) + log1p(exp(-|x|)) stays finite for large |x|
      const auto& x = in(0).array();
      return Tensor(in(0).shape(), x.max(Scalar(0)) + (-x.abs()).exp().log1p());
    }
    case OpKind::kBatchNorm: return kernels::batch_norm(in(0));
    case OpKind::kSoftmax: return kernels::softmax(in(0));
    case OpKind::kLogSoftmax: return kernels::log_softmax(in(0));
    case OpKind::kCrossEntropy: {
      const Tensor terms = kernels::cross_entropy_terms(in(0), in(1));
      const Scalar total = terms.array().sum();
      return Tensor::scalar(n.reduction == Reduction::kMean ? total / Scalar(terms.size()) : total);
    }
    case OpKind::kWeightedCrossEntropy: {
      const Tensor terms = kernels::cross_entropy_terms(in(0), in(1));
      if (in(2).size() != terms.size()) {
        throw ShapeError("weighted_cross_entropy: " + std::to_string(in(2).size()) + " weights for " +
                         std::to_string(terms.size()) + " rows");
      }
      return Tensor::scalar((terms.array() * in(2).array()).sum());
    }
    case OpKind::kMix: {
      const Tensor& w = in(0);
      if (w.rank() != 2 || n.row < 0 || n.row >= w.dim(0)) throw ShapeError("mix: bad weight row");
      Tensor y = in(1);
      y.array() *= w[n.row * w.dim(1) + n.slots[0]];
      for (std::size_t k = 2; k < n.inputs.size(); ++k) {
        require_same_shape(y, in(k), "mix");
        y.array() += w[n.row * w.dim(1) + n.slots[k - 1]] * in(k).array();
      }
      return y;
    }
    case OpKind::kConcat: {
      std::vector<const Tensor*> parts;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) parts.push_back(&in(k));
      return kernels::concat_last(parts);
    }
    case OpKind::kReshape: return in(0).reshaped(infer_reshape(n.target_shape, in(0).size()));
    case OpKind::kMean: return Tensor::scalar(in(0).array().mean());
    case OpKind::kSum: return Tensor::scalar(in(0).array().sum());
    case OpKind::kSpatialMean: return kernels::spatial_mean(in(0));
    case OpKind::kUpsample2x: return kernels::upsample2x(in(0));
    case OpKind::kGatherRows: {
      const Tensor& table = in(0);
      const Tensor& labels = in(1);
      if (table.rank() != 2) throw ShapeError("gather_rows: table must be rank 2");
      const Index d = table.dim(1);
      Tensor y({labels.size(), d});
      for (Index i = 0; i < labels.size(); ++i) {
        y.matrix(labels.size(), d).row(i) =
            table.matrix(table.dim(0), d).row(kernels::checked_label(labels[i], table.dim(0)));
      }
      return y;
    }
  }
  throw Error("forward: unknown op");
}

std::vector<bool> needed_nodes(const Graph& graph, const std::vector<int>& roots) {
  std::vector<bool> need(graph.nodes().size(), false);
  for (int r : roots) need[static_cast<std::size_t>(r)] = true;
  for (int id = static_cast<int>(graph.nodes().size()) - 1; id >= 0; --id) {
    if (!need[static_cast<std::size_t>(id)]) continue;
    for (int in : graph.node(id).inputs) need[static_cast<std::size_t>(in)] = true;
  }
  return need;
}

}  // namespace

Evaluation forward(const Graph& graph, const Bindings& bindings, const std::vector<std::string>& outputs) {
  std::vector<int> roots;
  if (outputs.empty()) {
    for (std::size_t id = 0; id < graph.nodes().size(); ++id) roots.push_back(static_cast<int>(id));
  } else {
    for (const auto& name : outputs) roots.push_back(graph.output(name).id);
  }
  std::vector<bool> need = needed_nodes(graph, roots);
  for (std::size_t id = 0; id < graph.nodes().size(); ++id) {
    const NodeRecord& n = graph.nodes()[id];
    if (n.kind == OpKind::kParameter && bindings.find(n.name)) need[id] = true;
  }
  std::vector<Tensor> values(graph.nodes().size());
  for (std::size_t id = 0; id < graph.nodes().size(); ++id) {
    if (!need[id]) continue;
    const NodeRecord& n = graph.nodes()[id];
    values[id] = eval_node(n, values, bindings);
    if (!values[id].all_finite()) {
      const std::string what = n.name.empty() ? std::string(op_name(n.kind)) : op_name(n.kind) + (" '" + n.name + "'");
      throw NonFiniteError("non-finite value produced by " + what + " (node " + std::to_string(id) + ")");
    }
  }
  return Evaluation(graph, std::move(values), std::move(need));
}

// ---- backward ------------------------------------------------------------

namespace {

void accumulate_node(const NodeRecord& n, const Evaluation& eval, int id, const Tensor& dy,
                     std::vector<Tensor>& grads, const std::vector<bool>& wants) {
  auto in = [&](std::size_t k) -> const Tensor& { return eval.value(n.inputs[k]); };
  auto g = [&](std::size_t k) -> Tensor* {
    const auto target = static_cast<std::size_t>(n.inputs[k]);
    if (!wants[target]) return nullptr;
    const Tensor& x = eval.value(n.inputs[k]);
    if (grads[target].shape() != x.shape() || grads[target].size() != x.size()) {
      grads[target] = Tensor::zeros(x.shape());
    }
    return &grads[target];
  };
  const Tensor& y = eval.value(id);
  switch (n.kind) {
    case OpKind::kInput:
    case OpKind::kParameter:
    case OpKind::kConstant: return;
    case OpKind::kMatMul: kernels::matmul_backward(in(0), in(1), dy, g(0), g(1)); return;
    case OpKind::kAddBias: {
      const Index c = in(1).size();
      if (Tensor* dx = g(0)) dx->array() += dy.array();
      if (Tensor* db = g(1)) db->matrix(1, c).row(0) += dy.matrix(dy.size() / c, c).colwise().sum();
      return;
    }
    case OpKind::kAdd:
      if (Tensor* da = g(0)) da->array() += dy.array();
      if (Tensor* db = g(1)) db->array() += dy.array();
      return;
    case OpKind::kMul:
      if (Tensor* da = g(0)) da->array() += dy.array() * in(1).array();
      if (Tensor* db = g(1)) db->array() += dy.array() * in(0).array();
      return;
    case OpKind::kScale:
      if (Tensor* dx = g(0)) dx->array() += dy.array() * n.factor;
      return;
    case OpKind::kConv2d: kernels::conv2d_backward(in(0), in(1), n.conv, dy, g(0), g(1)); return;
    case OpKind::kDepthwiseConv2d:
      kernels::depthwise_conv2d_backward(in(0), in(1), n.conv, dy, g(0), g(1));
      return;
    case OpKind::kMaxPool: kernels::max_pool_backward(in(0), n.window, n.conv, dy, g(0)); return;
    case OpKind::kAvgPool: kernels::avg_pool_backward(in(0), n.window, n.conv, dy, g(0)); return;
    case OpKind::kRelu:
      if (Tensor* dx = g(0)) dx->array() += (in(0).array() > Scalar(0)).select(dy.array(), Scalar(0));
      return;
    case OpKind::kTanh:
      if (Tensor* dx = g(0)) dx->array() += dy.array() * (Scalar(1) - y.array().square());
      return;
    case OpKind::kSigmoid:
      if (Tensor* dx = g(0)) dx->array() += dy.array() * y.array() * (Scalar(1) - y.array());
      return;
    case OpKind::kSoftplus:
      if (Tensor* dx = g(0)) dx->array() += dy.array() / (Scalar(1) + (-in(0).array()).exp());
      return;
    case OpKind::kBatchNorm: kernels::batch_norm_backward(in(0), y, dy, g(0)); return;
    case OpKind::kSoftmax: kernels::softmax_backward(y, dy, g(0)); return;
    case OpKind::kLogSoftmax: kernels::log_softmax_backward(y, dy, g(0)); return;
    case OpKind::kCrossEntropy: {
      const Index rows = in(0).dim(0);
      const Scalar k = dy.item() * (n.reduction == Reduction::kMean ? Scalar(1) / Scalar(rows) : Scalar(1));
      std::vector<Scalar> coeff(static_cast<std::size_t>(rows), k);
      kernels::cross_entropy_backward(in(0), in(1), coeff, g(0));
      return;
    }
    case OpKind::kWeightedCrossEntropy: {
      const Tensor& w = in(2);
      std::vector<Scalar> coeff(static_cast<std::size_t>(w.size()));
      for (Index i = 0; i < w.size(); ++i) coeff[static_cast<std::size_t>(i)] = dy.item() * w[i];
      kernels::cross_entropy_backward(in(0), in(1), coeff, g(0));
      if (Tensor* dw = g(2)) {
        dw->array() += dy.item() * kernels::cross_entropy_terms(in(0), in(1)).array();
      }
      return;
    }
    case OpKind::kMix: {
      const Tensor& w = in(0);
      Tensor* dw = g(0);
      for (std::size_t k = 1; k < n.inputs.size(); ++k) {
        const Index col = n.row * w.dim(1) + n.slots[k - 1];
        if (Tensor* dx = g(k)) dx->array() += w[col] * dy.array();
        if (dw) (*dw)[col] += (dy.array() * in(k).array()).sum();
      }
      return;
    }
    case OpKind::kConcat: {
      std::vector<const Tensor*> parts;
      std::vector<Tensor*> dparts;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        parts.push_back(&in(k));
        dparts.push_back(g(k));
      }
      kernels::concat_last_backward(parts, dy, dparts);
      return;
    }
    case OpKind::kReshape:
      if (Tensor* dx = g(0)) dx->array() += dy.array();
      return;
    case OpKind::kMean:
      if (Tensor* dx = g(0)) dx->array() += dy.item() / Scalar(in(0).size());
      return;
    case OpKind::kSum:
      if (Tensor* dx = g(0)) dx->array() += dy.item();
      return;
    case OpKind::kSpatialMean: kernels::spatial_mean_backward(in(0), dy, g(0)); return;
    case OpKind::kUpsample2x: kernels::upsample2x_backward(in(0), dy, g(0)); return;
    case OpKind::kGatherRows: {
      if (Tensor* dt = g(0)) {
        const Tensor& table = in(0);
        const Tensor& labels = in(1);
        const Index d = table.dim(1);
        for (Index i = 0; i < labels.size(); ++i) {
          dt->matrix(table.dim(0), d).row(kernels::checked_label(labels[i], table.dim(0))) +=
              dy.matrix(labels.size(), d).row(i);
        }
      }
      return;
    }
  }
}

}  // namespace

GradientMap backward(const Evaluation& eval, Var output, const std::vector<std::string>& wrt, Scalar seed) {
  const Graph& graph = eval.graph();
  const Tensor& out = eval.value(output.id);
  if (out.size() != 1) throw ShapeError("backward: output must be scalar, got " + shape_string(out.shape()));

  std::vector<std::string> names = wrt.empty() ? graph.parameter_names() : wrt;
  const std::size_t count = graph.nodes().size();

  // wants[id]: node lies on a path from a requested parameter.
  std::vector<bool> wants(count, false);
  for (const auto& name : names) {
    const int id = graph.find_leaf(name);
    if (id >= 0) wants[static_cast<std::size_t>(id)] = true;
  }
  for (std::size_t id = 0; id < count; ++id) {
    if (!eval.computed(static_cast<int>(id))) continue;
    for (int in : graph.nodes()[id].inputs) {
      if (wants[static_cast<std::size_t>(in)]) wants[id] = true;
    }
  }

  std::vector<Tensor> grads(count);
  grads[static_cast<std::size_t>(output.id)] = Tensor(out.shape(), Tensor::Array::Constant(1, seed));
  if (wants[static_cast<std::size_t>(output.id)]) {
    for (int id = output.id; id >= 0; --id) {
      const auto idx = static_cast<std::size_t>(id);
      if (!wants[idx] || grads[idx].size() == 0) continue;
      const NodeRecord& n = graph.node(id);
      accumulate_node(n, eval, id, grads[idx], grads, wants);
      // Interior gradients are dead once pushed to the inputs.
      if (n.kind != OpKind::kParameter && n.kind != OpKind::kInput) grads[idx] = Tensor();
    }
  }

  GradientMap result;
  for (const auto& name : names) {
    const int id = graph.find_leaf(name);
    if (id < 0 || graph.node(id).kind != OpKind::kParameter) {
      throw Error("backward: '" + name + "' is not a parameter of this graph");
    }
    if (!eval.computed(id)) throw Error("backward: parameter '" + name + "' was not bound in the forward pass");
    const auto idx = static_cast<std::size_t>(id);
    const Tensor& value = eval.value(id);
    const bool has_grad = grads[idx].shape() == value.shape() && grads[idx].size() == value.size();
    result[name] = has_grad ? std::move(grads[idx]) : Tensor::zeros(value.shape());
  }
  return result;
}

GradientMap backward(const Evaluation& eval, const std::string& output, const std::vector<std::string>& wrt,
                     Scalar seed) {
  return backward(eval, eval.graph().output(output), wrt, seed);
}

}  // namespace lfm
