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

#include "lfm/search_space.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "lfm/hash.hpp"

namespace lfm {
namespace {

constexpr std::array<std::pair<OpId, std::string_view>, 8> kOpNames{{
    {OpId::kSepConv3x3, "sep_conv_3x3"},
    {OpId::kSepConv5x5, "sep_conv_5x5"},
    {OpId::kDilConv3x3, "dil_conv_3x3"},
    {OpId::kDilConv5x5, "dil_conv_5x5"},
    {OpId::kMaxPool3x3, "max_pool_3x3"},
    {OpId::kAvgPool3x3, "avg_pool_3x3"},
    {OpId::kZero, "zero"},
    {OpId::kIdentity, "identity"},
}};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// `search` adds the normalization after pooling used by relaxed cells.
Var candidate_op(ParamFactory& pf, OpId op, Var x, const std::string& name, Index c, int stride, bool search) {
  switch (op) {
    case OpId::kSepConv3x3:
      return sep_conv(pf, x, name, c, 3, stride);
    case OpId::kSepConv5x5:
      return sep_conv(pf, x, name, c, 5, stride);
    case OpId::kDilConv3x3:
      return dil_conv(pf, x, name, c, 3, stride);
    case OpId::kDilConv5x5:
      return dil_conv(pf, x, name, c, 5, stride);
    case OpId::kMaxPool3x3: {
      Var y = max_pool(x, 3, stride, 1);
      return search ? batch_norm(y) : y;
    }
    case OpId::kAvgPool3x3: {
      Var y = avg_pool(x, 3, stride, 1);
      return search ? batch_norm(y) : y;
    }
    case OpId::kIdentity:
      return stride == 1 ? x : factorized_reduce(pf, x, name, c, c);
    case OpId::kZero:
      break;
  }
  throw Error("candidate_op: the zero op has no graph");
}

struct CellInputs {
  Var s0, s1;
  Index c_pp, c_p, c;
  bool reduction, reduction_prev;
};

std::pair<Var, Var> preprocess(ParamFactory& pf, const CellInputs& in, const std::string& name) {
  Var s0 = in.reduction_prev ? factorized_reduce(pf, in.s0, name + ".pre0", in.c_pp, in.c)
                             : relu_conv_bn(pf, in.s0, name + ".pre0", in.c_pp, in.c, 1, 1, 0);
  Var s1 = relu_conv_bn(pf, in.s1, name + ".pre1", in.c_p, in.c, 1, 1, 0);
  return {s0, s1};
}

Var sum_vars(const std::vector<Var>& vs) {
  Var acc = vs.front();
  for (std::size_t i = 1; i < vs.size(); ++i) acc = acc + vs[i];
  return acc;
}

Var mixed_cell(ParamFactory& pf, const CandidateOpSet& ops, Index k, Var weights, const CellInputs& in,
               const std::string& name) {
  auto [s0, s1] = preprocess(pf, in, name);
  std::vector<Var> states{s0, s1};
  for (Index i = 0; i < k; ++i) {
    std::vector<Var> contributions;
    for (Index j = 0; j < i + 2; ++j) {
      const Index e = edge_index(i, j);
      const int stride = in.reduction && j < 2 ? 2 : 1;
      std::vector<Var> outs;
      std::vector<Index> slots;
      for (Index o = 0; o < ops.size(); ++o) {
        if (ops[o] == OpId::kZero) continue;
        const std::string op_name = name + ".e" + std::to_string(e) + "." + std::string(op_id_name(ops[o]));
        outs.push_back(candidate_op(pf, ops[o], states[static_cast<std::size_t>(j)], op_name, in.c, stride, true));
        slots.push_back(o);
      }
      contributions.push_back(mix(weights, e, outs, slots));
    }
    states.push_back(sum_vars(contributions));
  }
  return concat(std::span<const Var>(states).subspan(2));
}

Var discrete_cell(ParamFactory& pf, const DiscreteCell& cell, const CellInputs& in, const std::string& name) {
  auto [s0, s1] = preprocess(pf, in, name);
  std::vector<Var> states{s0, s1};
  for (std::size_t i = 0; i < cell.nodes.size(); ++i) {
    std::vector<Var> contributions;
    for (std::size_t g = 0; g < 2; ++g) {
      const Gene& gene = cell.nodes[i][g];
      const int stride = in.reduction && gene.input < 2 ? 2 : 1;
      const std::string op_name = name + ".n" + std::to_string(i) + "." + std::to_string(g) + "." +
                                  std::string(op_id_name(gene.op));
      contributions.push_back(
          candidate_op(pf, gene.op, states[static_cast<std::size_t>(gene.input)], op_name, in.c, stride, false));
    }
    states.push_back(contributions[0] + contributions[1]);
  }
  return concat(std::span<const Var>(states).subspan(2));
}

// Shared stem / stacking / head skeleton. `cell_fn(cell_index, inputs)`
// returns the cell output; `k` is the number of intermediate nodes.
template <typename CellFn>
Var stack_network(ParamFactory& pf, const SupernetSpec& spec, Index k, Var images, Index in_channels, Index outputs,
                  CellFn cell_fn) {
  const Index c_stem = spec.stem_multiplier * spec.channels;
  Var stem = batch_norm(conv2d(images, pf.conv_weight("stem.conv", 3, in_channels, c_stem), {1, 1, 1}));
  CellInputs in{stem, stem, c_stem, c_stem, spec.channels, false, false};
  Index h = spec.input_height, w = spec.input_width;
  for (Index i = 0; i < spec.num_cells; ++i) {
    in.reduction = spec.is_reduction_cell(i);
    if (in.reduction) {
      in.c *= 2;
      h /= 2;
      w /= 2;
    }
    Var out = cell_fn(i, in);
    in.s0 = in.s1;
    in.s1 = out;
    in.c_pp = in.c_p;
    in.c_p = k * in.c;
    in.reduction_prev = in.reduction;
  }
  if (spec.head == HeadKind::kGlobalPool) return linear(pf, spatial_mean(in.s1), "head", in.c_p, outputs);
  const Index features = h * w * in.c_p;
  return linear(pf, reshape(in.s1, {-1, features}), "head", features, outputs);
}

Tensor slice_rows(const Tensor& t, Index begin, Index end) {
  Shape shape = t.shape();
  const Index row = t.size() / shape[0];
  shape[0] = end - begin;
  return Tensor(shape, t.array().segment(begin * row, (end - begin) * row));
}

}  // namespace

std::string_view op_id_name(OpId op) {
  for (const auto& [id, name] : kOpNames) {
    if (id == op) return name;
  }
  throw Error("unknown op id");
}

OpId parse_op_id(std::string_view name) {
  for (const auto& [id, n] : kOpNames) {
    if (n == name) return id;
  }
  throw ValidationError("unknown candidate op '" + std::string(name) + "'");
}

CandidateOpSet::CandidateOpSet() {
  for (const auto& [id, _] : kOpNames) ops_.push_back(id);
}

CandidateOpSet::CandidateOpSet(std::vector<OpId> ops) : ops_(std::move(ops)) {
  if (ops_.size() < 2) throw ValidationError("candidate op set needs at least two ops");
  std::set<OpId> seen(ops_.begin(), ops_.end());
  if (seen.size() != ops_.size()) throw ValidationError("candidate op set has duplicates");
}

CandidateOpSet CandidateOpSet::parse(std::string_view list) {
  std::vector<OpId> ops;
  while (!list.empty()) {
    const std::size_t comma = list.find(',');
    ops.push_back(parse_op_id(trim(list.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    list.remove_prefix(comma + 1);
  }
  return CandidateOpSet(std::move(ops));
}

std::optional<Index> CandidateOpSet::index_of(OpId op) const {
  auto it = std::find(ops_.begin(), ops_.end(), op);
  if (it == ops_.end()) return std::nullopt;
  return static_cast<Index>(it - ops_.begin());
}

std::string CandidateOpSet::to_string() const {
  std::string out;
  for (OpId op : ops_) {
    if (!out.empty()) out += ',';
    out += op_id_name(op);
  }
  return out;
}

std::uint64_t CandidateOpSet::hash() const { return fnv1a(to_string()); }

Index SupernetSpec::num_edges() const { return edges_for(intermediate_nodes()); }

bool SupernetSpec::is_reduction_cell(Index cell) const {
  return use_reduction && (cell == num_cells / 3 || cell == 2 * num_cells / 3);
}

void SupernetSpec::validate() const {
  auto positive = [](Index v, const char* what) {
    if (v <= 0) throw ValidationError(std::string("supernet: ") + what + " must be positive");
  };
  positive(num_cells, "num_cells");
  positive(channels, "channels");
  positive(input_height, "input height");
  positive(input_width, "input width");
  positive(input_channels, "input channels");
  positive(stem_multiplier, "stem_multiplier");
  if (num_nodes < 4) throw ValidationError("supernet: num_nodes must be at least 4 (two inputs, one output)");
  if (num_classes < 2) throw ValidationError("supernet: need at least two classes");
  if (std::none_of(ops.ops().begin(), ops.ops().end(), [](OpId o) { return o != OpId::kZero; })) {
    throw ValidationError("supernet: candidate set has no non-zero op");
  }
  Index divisor = 1;
  for (Index i = 0; i < num_cells; ++i) {
    if (is_reduction_cell(i)) divisor *= 2;
  }
  if (input_height % divisor != 0 || input_width % divisor != 0) {
    throw ValidationError("supernet: input size must be divisible by " + std::to_string(divisor));
  }
}

ArchParams ArchParams::zeros(const SupernetSpec& spec) {
  ArchParams a;
  a.normal = Matrix::Zero(spec.num_edges(), spec.ops.size());
  if (spec.use_reduction) a.reduce = Matrix::Zero(spec.num_edges(), spec.ops.size());
  return a;
}

ArchParams ArchParams::random(const SupernetSpec& spec, std::uint64_t seed, Scalar scale) {
  ArchParams a = zeros(spec);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0, double(scale));
  for (Index i = 0; i < a.normal.size(); ++i) a.normal.data()[i] = Scalar(normal(rng));
  for (Index i = 0; i < a.reduce.size(); ++i) a.reduce.data()[i] = Scalar(normal(rng));
  return a;
}

namespace {

Tensor to_tensor(const Matrix& m) {
  Tensor t({m.rows(), m.cols()});
  t.matrix(m.rows(), m.cols()) = m;
  return t;
}

Matrix to_matrix(const Tensor& t) {
  if (t.rank() != 2) throw ShapeError("arch tensor must be rank 2, got " + shape_string(t.shape()));
  return t.matrix(t.dim(0), t.dim(1));
}

}  // namespace

TensorMap ArchParams::tensors() const {
  TensorMap m{{kArchNormal, to_tensor(normal)}};
  if (has_reduce()) m.emplace(kArchReduce, to_tensor(reduce));
  return m;
}

ArchParams ArchParams::from_tensors(const TensorMap& m) {
  ArchParams a;
  a.normal = to_matrix(m.at(kArchNormal));
  if (auto it = m.find(kArchReduce); it != m.end()) a.reduce = to_matrix(it->second);
  return a;
}

Vector ArchParams::flat() const { return flatten(tensors()); }

ArchParams ArchParams::with_flat(const Vector& v) const { return from_tensors(unflatten(v, tensors())); }

Matrix row_softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Index r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r).array();
    const Eigen::Array<Scalar, 1, Eigen::Dynamic> e = (row - row.maxCoeff()).exp();
    out.row(r) = (e / e.sum()).matrix();
  }
  return out;
}

ArchVars declare_arch(Graph& graph, bool with_reduce) {
  ArchVars v;
  v.normal = softmax(graph.parameter(kArchNormal));
  if (with_reduce) v.reduce = softmax(graph.parameter(kArchReduce));
  return v;
}

Var append_supernet(ParamFactory& pf, const SupernetSpec& spec, const ArchVars& arch, Var images, Index outputs) {
  spec.validate();
  const Index k = spec.intermediate_nodes();
  return stack_network(pf, spec, k, images, spec.input_channels, outputs, [&](Index i, const CellInputs& in) {
    return mixed_cell(pf, spec.ops, k, in.reduction ? arch.reduce : arch.normal, in, "cell" + std::to_string(i));
  });
}

void add_classifier_outputs(Graph& graph, Var logits) {
  graph.set_output(kLogits, logits);
  Var labels = graph.input(kLabels);
  graph.set_output(kLoss, cross_entropy(logits, labels, Reduction::kMean));
  graph.set_output(kWeightedLoss, weighted_cross_entropy(logits, labels, graph.input(kExampleWeights)));
}

Network build_supernet(const SupernetSpec& spec, std::uint64_t seed, const std::string& prefix) {
  Network net;
  net.prefix = prefix;
  net.num_classes = spec.num_classes;
  ParamFactory pf(net.graph, prefix, &net.weights, seed);
  const ArchVars arch = declare_arch(net.graph, spec.use_reduction);
  add_classifier_outputs(net.graph,
                         append_supernet(pf, spec, arch, net.graph.input(kImages), spec.num_classes));
  return net;
}

MixedEdge::MixedEdge(CandidateOpSet ops, Index channels, int stride, std::uint64_t seed) : ops_(std::move(ops)) {
  ParamFactory pf(graph_, "", &weights_, seed);
  Var x = graph_.input("x");
  Var w = softmax(graph_.parameter("logits"));
  std::vector<Var> outs;
  std::vector<Index> slots;
  for (Index o = 0; o < ops_.size(); ++o) {
    if (ops_[o] == OpId::kZero) continue;
    Var y = candidate_op(pf, ops_[o], x, "op" + std::to_string(o), channels, stride, true);
    graph_.set_output("op" + std::to_string(o), y);
    outs.push_back(y);
    slots.push_back(o);
  }
  graph_.set_output("y", mix(w, 0, outs, slots));
}

Tensor MixedEdge::forward(const Vector& logits, const Tensor& input) const {
  if (logits.size() != ops_.size()) throw ShapeError("mixed edge: logit row length does not match op count");
  Tensor row({1, logits.size()});
  row.array() = logits.array();
  Bindings b;
  b.bind(weights_).bind("x", input).bind("logits", row);
  return lfm::forward(graph_, b, {"y"}).output("y");
}

Tensor MixedEdge::op_output(Index k, const Tensor& input) const {
  if (ops_[k] == OpId::kZero) {
    // shape of any non-zero op output; all candidate ops preserve it
    for (Index o = 0; o < ops_.size(); ++o) {
      if (ops_[o] != OpId::kZero) return Tensor::zeros(op_output(o, input).shape());
    }
  }
  const Tensor row = Tensor::zeros({1, ops_.size()});
  Bindings b;
  b.bind(weights_).bind("x", input).bind("logits", row);
  const std::string name = "op" + std::to_string(k);
  return lfm::forward(graph_, b, {name}).output(name);
}

Tensor mixed_op_forward(const MixedEdge& edge_ops, const ArchParams& arch, Index edge, const Tensor& input,
                        CellType type) {
  const Matrix& logits = arch.of(type);
  if (edge < 0 || edge >= logits.rows()) throw ValidationError("mixed_op_forward: edge out of range");
  return edge_ops.forward(logits.row(edge).transpose(), input);
}

void DiscreteCell::validate() const {
  if (nodes.empty()) throw ValidationError("discrete cell has no nodes");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (const Gene& g : nodes[i]) {
      if (g.op == OpId::kZero) throw ValidationError("discrete cell node " + std::to_string(i + 2) + " uses zero");
      if (g.input < 0 || g.input >= static_cast<Index>(i) + 2) {
        throw ValidationError("discrete cell node " + std::to_string(i + 2) + " reads input " +
                              std::to_string(g.input) + " which does not precede it");
      }
    }
  }
}

DiscreteCell derive_cell(const Matrix& logits, const CandidateOpSet& ops) {
  if (logits.cols() != ops.size()) throw ShapeError("derive_cell: logits do not match the op set");
  if (!logits.allFinite()) throw ValidationError("derive_cell: non-finite logits");
  const Matrix p = row_softmax(logits);
  Index k = 0;
  while (edges_for(k) < logits.rows()) ++k;
  if (edges_for(k) != logits.rows()) throw ShapeError("derive_cell: edge count is not a valid cell size");

  DiscreteCell cell;
  for (Index i = 0; i < k; ++i) {
    struct Candidate {
      Index input;
      Index op;
      Scalar strength;
    };
    std::vector<Candidate> cands;
    for (Index j = 0; j < i + 2; ++j) {
      const Index e = edge_index(i, j);
      Candidate c{j, -1, 0};
      for (Index o = 0; o < ops.size(); ++o) {
        if (ops[o] == OpId::kZero) continue;
        if (c.op < 0 || p(e, o) > c.strength) c = {j, o, p(e, o)};
      }
      cands.push_back(c);
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& a, const Candidate& b) { return a.strength > b.strength; });
    std::array<Gene, 2> genes{Gene{cands[0].input, ops[cands[0].op]}, Gene{cands[1].input, ops[cands[1].op]}};
    if (genes[1].input < genes[0].input) std::swap(genes[0], genes[1]);
    cell.nodes.push_back(genes);
  }
  return cell;
}

Genotype derive_genotype(const ArchParams& arch, const CandidateOpSet& ops, std::string config_hash) {
  Genotype g;
  g.normal = derive_cell(arch.normal, ops);
  if (arch.has_reduce()) g.reduce = derive_cell(arch.reduce, ops);
  g.ops = ops;
  g.config_hash = std::move(config_hash);
  return g;
}

Network build_eval_network(const Genotype& genotype, const SupernetSpec& spec, std::uint64_t seed,
                           const std::string& prefix) {
  genotype.normal.validate();
  if (genotype.reduce) genotype.reduce->validate();
  if (spec.use_reduction && !genotype.reduce) throw ValidationError("eval network: genotype has no reduction cell");
  if (genotype.reduce && genotype.reduce->nodes.size() != genotype.normal.nodes.size()) {
    throw ValidationError("eval network: normal and reduction cells differ in node count");
  }
  SupernetSpec shape = spec;
  shape.num_nodes = static_cast<Index>(genotype.normal.nodes.size()) + 3;
  shape.validate();

  Network net;
  net.prefix = prefix;
  net.num_classes = spec.num_classes;
  ParamFactory pf(net.graph, prefix, &net.weights, seed);
  const Index k = shape.intermediate_nodes();
  Var logits = stack_network(pf, shape, k, net.graph.input(kImages), shape.input_channels, shape.num_classes,
                             [&](Index i, const CellInputs& in) {
                               const DiscreteCell& cell = in.reduction ? *genotype.reduce : genotype.normal;
                               return discrete_cell(pf, cell, in, "cell" + std::to_string(i));
                             });
  add_classifier_outputs(net.graph, logits);
  return net;
}

Tensor predict(const Network& net, const WeightSet& weights, const ArchParams* arch, const Tensor& images,
               Index batch) {
  const Index n = images.dim(0);
  TensorMap arch_tensors;
  if (arch != nullptr) arch_tensors = arch->tensors();
  Tensor out({n, net.num_classes});
  for (Index begin = 0; begin < n; begin += batch) {
    const Index end = std::min(n, begin + batch);
    const Tensor x = slice_rows(images, begin, end);
    Bindings b;
    b.bind(weights).bind(arch_tensors).bind(kImages, x);
    const Tensor logits = forward(net.graph, b, {kLogits}).output(kLogits);
    out.array().segment(begin * net.num_classes, logits.size()) = logits.array();
  }
  return out;
}

std::string format_genotype(const Genotype& genotype) {
  std::ostringstream os;
  os << "# lfmcw genotype v1\n";
  os << "# config_hash " << (genotype.config_hash.empty() ? "none" : genotype.config_hash) << "\n";
  os << "# ops " << genotype.ops.to_string() << " hash " << hex64(genotype.ops.hash()) << "\n";
  auto cell_lines = [&](const char* type, const DiscreteCell& cell) {
    for (std::size_t i = 0; i < cell.nodes.size(); ++i) {
      for (const Gene& g : cell.nodes[i]) {
        os << type << ' ' << i + 2 << ' ' << g.input << ' ' << op_id_name(g.op) << '\n';
      }
    }
  };
  cell_lines("normal", genotype.normal);
  if (genotype.reduce) cell_lines("reduce", *genotype.reduce);
  return os.str();
}

Genotype parse_genotype(std::string_view text) {
  Genotype g;
  bool have_header = false, have_ops = false;
  std::vector<std::vector<Gene>> normal, reduce;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t line_start = pos;
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    const std::string_view line = trim(text.substr(pos, eol - pos));
    pos = eol + 1;
    if (line.empty()) continue;
    auto fail = [&](const std::string& why) -> ParseError { return ParseError("genotype: " + why, line_start); };

    std::istringstream is{std::string(line)};
    if (line.front() == '#') {
      std::string hash_mark, key;
      is >> hash_mark >> key;
      if (key == "lfmcw") {
        std::string kind, version;
        is >> kind >> version;
        if (kind != "genotype" || version != "v1") throw fail("unsupported header '" + std::string(line) + "'");
        have_header = true;
      } else if (key == "config_hash") {
        is >> g.config_hash;
        if (g.config_hash == "none") g.config_hash.clear();
      } else if (key == "ops") {
        std::string list, hash_kw, hash;
        is >> list >> hash_kw >> hash;
        try {
          g.ops = CandidateOpSet::parse(list);
        } catch (const ValidationError& e) {
          throw fail(e.what());
        }
        if (hash_kw != "hash" || hash != hex64(g.ops.hash())) throw fail("op-set hash does not match its op list");
        have_ops = true;
      }
      continue;
    }
    if (!have_header) throw fail("missing '# lfmcw genotype v1' header");
    std::string type, op_name, extra;
    long long node = -1, input = -1;
    if (!(is >> type >> node >> input >> op_name) || (is >> extra)) {
      throw fail("expected '<normal|reduce> <node> <input> <op>'");
    }
    std::vector<std::vector<Gene>>* cell = type == "normal" ? &normal : type == "reduce" ? &reduce : nullptr;
    if (cell == nullptr) throw fail("unknown cell type '" + type + "'");
    OpId op;
    try {
      op = parse_op_id(op_name);
    } catch (const ValidationError& e) {
      throw fail(e.what());
    }
    if (op == OpId::kZero) throw fail("the zero op cannot be selected");
    if (node < 2) throw fail("node ids start at 2");
    if (input < 0 || input >= node) throw fail("input " + std::to_string(input) + " does not precede node " +
                                               std::to_string(node));
    const auto idx = static_cast<std::size_t>(node - 2);
    if (idx > cell->size()) throw fail("node " + std::to_string(node) + " is out of order");
    if (idx == cell->size()) cell->emplace_back();
    if ((*cell)[idx].size() >= 2) throw fail("node " + std::to_string(node) + " has more than two inputs");
    if (idx + 1 != cell->size()) throw fail("node " + std::to_string(node) + " is out of order");
    (*cell)[idx].push_back(Gene{static_cast<Index>(input), op});
  }
  const auto end = static_cast<std::uint64_t>(text.size());
  if (!have_header) throw ParseError("genotype: missing header", end);
  if (!have_ops) throw ParseError("genotype: missing '# ops' line", end);
  auto finish = [&](const std::vector<std::vector<Gene>>& nodes, const char* type) {
    DiscreteCell cell;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i].size() != 2) {
        throw ParseError(std::string("genotype: ") + type + " node " + std::to_string(i + 2) +
                             " needs exactly two inputs",
                         end);
      }
      cell.nodes.push_back({nodes[i][0], nodes[i][1]});
    }
    return cell;
  };
  if (normal.empty()) throw ParseError("genotype: no normal cell", end);
  g.normal = finish(normal, "normal");
  if (!reduce.empty()) g.reduce = finish(reduce, "reduce");
  return g;
}

}  // namespace lfm
