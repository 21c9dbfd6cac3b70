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

#include "lfm/search.hpp"

#include <cstdio>
#include <cstring>

#include "byte_io.hpp"

namespace lfm {

void SearchOptions::validate() const {
  trilevel.validate();
  if (epochs < 0) throw ValidationError("epochs must be >= 0");
  if (iterations < 0) throw ValidationError("iterations must be >= 0");
  if (!(arch_init_scale >= 0)) throw ValidationError("architecture init scale must be >= 0");
}

SearchResult run_search(NeuralTrilevelProblem& problem, const SearchOptions& options, const SearchObserver& observer) {
  options.validate();
  const TrilevelOptions& opt = options.trilevel;
  SearchResult result;
  result.state = problem.initial_state(opt, options.arch_init_scale);
  const Index per_epoch = problem.batches_per_epoch();
  const Index total = options.iterations > 0 ? options.iterations : options.epochs * per_epoch;
  const Index epochs = options.iterations > 0 ? (total + per_epoch - 1) / per_epoch : options.epochs;
  result.records.reserve(static_cast<std::size_t>(total));

  for (Index it = 0; it < total; ++it) {
    const Index epoch = it / per_epoch;
    apply_schedule(result.state, opt, epoch, epochs);
    TrilevelState next = result.state;
    IterationRecord rec;
    try {
      rec = trilevel_iteration(problem, next, opt);
    } catch (const NonFiniteError& e) {
      result.aborted = true;
      result.abort_reason = "iteration " + std::to_string(it) + ": " + e.what();
      break;
    }
    rec.epoch = epoch;
    result.state = std::move(next);
    if (observer) observer(rec, result.state);
    result.records.push_back(std::move(rec));
  }
  const SupernetSpec& spec = problem.spec().supernet;
  result.genotype = derive_genotype(problem.arch_from(result.state.a), spec.ops, options.config_hash);
  return result;
}

namespace {

void append_number(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  out += buf;
}

}  // namespace

std::string metrics_csv_header(Index num_classes) {
  std::string h = "iteration,epoch,loss_w1,loss_gan_g,loss_gan_h,loss_w2_real,loss_w2_synth,val_loss";
  for (Index c = 0; c < num_classes; ++c) h += ",l_c_" + std::to_string(c);
  return h + ",grad_norm_A";
}

std::string metrics_csv_row(const IterationRecord& r) {
  std::string row = std::to_string(r.iteration) + "," + std::to_string(r.epoch);
  for (Scalar v : {r.loss_w1, r.loss_gan_g, r.loss_gan_h, r.loss_w2_real, r.loss_w2_synth, r.val_loss}) {
    row += ',';
    append_number(row, double(v));
  }
  for (Index c = 0; c < r.class_losses.size(); ++c) {
    row += ',';
    append_number(row, double(r.class_losses[c]));
  }
  row += ',';
  append_number(row, double(r.grad_norm_a));
  return row;
}

std::string format_metrics_csv(const std::vector<IterationRecord>& records, Index num_classes,
                               std::string_view config_hash) {
  std::string out = "# config_hash " + std::string(config_hash.empty() ? "none" : config_hash) + "\n";
  out += metrics_csv_header(num_classes) + "\n";
  for (const IterationRecord& r : records) {
    if (r.class_losses.size() != num_classes) throw ShapeError("metrics row has the wrong class count");
    out += metrics_csv_row(r) + "\n";
  }
  return out;
}

// ---- checkpoints ----------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[4] = {'L', 'F', 'M', 'K'};

struct NamedOptimizer {
  const char* name;
  Optimizer TrilevelState::*opt;
};
constexpr NamedOptimizer kOptimizers[] = {
    {"opt_a", &TrilevelState::opt_a},   {"opt_w1", &TrilevelState::opt_w1}, {"opt_w2", &TrilevelState::opt_w2},
    {"opt_g", &TrilevelState::opt_g},   {"opt_h", &TrilevelState::opt_h},
};

struct NamedVariable {
  const char* name;
  Vector TrilevelState::*var;
};
constexpr NamedVariable kVariables[] = {
    {"a", &TrilevelState::a}, {"w1", &TrilevelState::w1}, {"w2", &TrilevelState::w2},
    {"g", &TrilevelState::g}, {"h", &TrilevelState::h},
};

void put_name(std::string& out, std::string_view name) {
  if (name.size() > 0xffff) throw ValidationError("checkpoint: name too long");
  detail::put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
  out.append(name);
}

}  // namespace

Checkpoint checkpoint_from_state(const TrilevelState& state, std::string config_hash) {
  Checkpoint c;
  c.config_hash = std::move(config_hash);
  for (const auto& v : kVariables) c.vectors[v.name] = state.*v.var;
  for (const auto& o : kOptimizers) {
    const Optimizer& opt = state.*o.opt;
    c.vectors[std::string(o.name) + ".m"] = opt.first_moment();
    c.vectors[std::string(o.name) + ".v"] = opt.second_moment();
    c.counters[std::string(o.name) + ".t"] = opt.steps();
  }
  c.counters["step"] = state.step;
  return c;
}

void restore_state(const Checkpoint& c, TrilevelState& state) {
  auto vec = [&](const std::string& k) -> const Vector& {
    auto it = c.vectors.find(k);
    if (it == c.vectors.end()) throw ValidationError("checkpoint: missing entry '" + k + "'");
    return it->second;
  };
  auto counter = [&](const std::string& k) {
    auto it = c.counters.find(k);
    if (it == c.counters.end()) throw ValidationError("checkpoint: missing entry '" + k + "'");
    return it->second;
  };
  for (const auto& v : kVariables) {
    const Vector& x = vec(v.name);
    if (x.size() != (state.*v.var).size()) {
      throw ShapeError(std::string("checkpoint: '") + v.name + "' does not match the configured network");
    }
  }
  for (const auto& v : kVariables) state.*v.var = vec(v.name);
  for (const auto& o : kOptimizers) {
    const std::string n = o.name;
    (state.*o.opt).restore(vec(n + ".m"), vec(n + ".v"), counter(n + ".t"));
  }
  state.step = counter("step");
}

std::string encode_checkpoint(const Checkpoint& c) {
  std::string out(kCheckpointMagic, 4);
  detail::put<std::uint16_t>(out, kCheckpointVersion);
  put_name(out, c.config_hash);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(c.vectors.size() + c.counters.size()));
  for (const auto& [name, v] : c.vectors) {
    put_name(out, name);
    detail::put<std::uint8_t>(out, 0);
    detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(v.size()));
    for (Index i = 0; i < v.size(); ++i) detail::put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(double(v[i])));
  }
  for (const auto& [name, n] : c.counters) {
    put_name(out, name);
    detail::put<std::uint8_t>(out, 1);
    detail::put<std::uint64_t>(out, 1);
    detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(n));
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  detail::ByteReader r(bytes, "LFMK");
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) throw ParseError("LFMK: bad magic", 0);
  r.get<std::uint32_t>("magic");
  const auto version = r.get<std::uint16_t>("version");
  if (version != kCheckpointVersion) throw ParseError("LFMK: unsupported version " + std::to_string(version), 4);
  Checkpoint c;
  c.config_hash = std::string(r.get_bytes(r.get<std::uint16_t>("hash length"), "config hash"));
  const auto entries = r.get<std::uint32_t>("entry count");
  for (std::uint32_t e = 0; e < entries; ++e) {
    const std::size_t at = r.pos();
    std::string name(r.get_bytes(r.get<std::uint16_t>("name length"), "entry name"));
    const auto kind = r.get<std::uint8_t>("entry kind");
    const auto n = r.get<std::uint64_t>("entry length");
    if (n > r.remaining() / 8) throw ParseError("LFMK: entry '" + name + "' runs past the end", at);
    if (kind == 0) {
      Vector v(static_cast<Index>(n));
      for (Index i = 0; i < v.size(); ++i) v[i] = Scalar(r.get_f64("vector value"));
      if (!c.vectors.emplace(name, std::move(v)).second) throw ParseError("LFMK: duplicate entry '" + name + "'", at);
    } else if (kind == 1 && n == 1) {
      const auto value = static_cast<Index>(r.get<std::uint64_t>("counter"));
      if (!c.counters.emplace(name, value).second) throw ParseError("LFMK: duplicate entry '" + name + "'", at);
    } else {
      throw ParseError("LFMK: bad entry kind for '" + name + "'", at);
    }
  }
  if (r.remaining() != 0) throw ParseError("LFMK: trailing bytes after the last entry", r.pos());
  return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  detail::write_file(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(detail::read_file(path)); }

Scalar accuracy(const Tensor& logits, std::span<const Index> labels) {
  const Index n = static_cast<Index>(labels.size());
  if (n == 0 || logits.rank() != 2 || logits.dim(0) != n) throw ShapeError("accuracy: logits/labels mismatch");
  const auto m = logits.matrix(n, logits.dim(1));
  Index correct = 0;
  for (Index i = 0; i < n; ++i) {
    Index best = 0;
    m.row(i).maxCoeff(&best);
    if (best == labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return Scalar(correct) / Scalar(n);
}

Scalar supernet_accuracy(const NeuralTrilevelProblem& problem, const Vector& a, const Vector& w,
                         const LabeledImageSet& data) {
  const ArchParams arch = problem.arch_from(a);
  const Tensor logits = predict(problem.classifier(), problem.weights_from(w), &arch, data.images, 256);
  return accuracy(logits, data.labels);
}

}  // namespace lfm
