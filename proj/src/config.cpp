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

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "lfm/harness.hpp"
#include "lfm/hash.hpp"

namespace lfm {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  s = trim(s);
  if (s.empty()) return out;
  while (true) {
    const std::size_t comma = s.find(',');
    out.push_back(trim(s.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

double to_double(std::string_view s) {
  s = trim(s);
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ValidationError("not a number: '" + std::string(s) + "'");
  return v;
}

long long to_integer(std::string_view s) {
  s = trim(s);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ValidationError("not an integer: '" + std::string(s) + "'");
  return v;
}

bool to_bool(std::string_view s) {
  s = trim(s);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ValidationError("not a boolean: '" + std::string(s) + "'");
}

// Shortest text that parses back to the same double.
std::string format_double(double v) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::string_view head_name(HeadKind h) { return h == HeadKind::kFlatten ? "flatten" : "global_pool"; }
HeadKind parse_head(std::string_view s) {
  if (s == "flatten") return HeadKind::kFlatten;
  if (s == "global_pool") return HeadKind::kGlobalPool;
  throw ValidationError("unknown head '" + std::string(s) + "'");
}

std::string_view source_name(DataSource s) { return s == DataSource::kBlobs ? "blobs" : "file"; }
DataSource parse_source(std::string_view s) {
  if (s == "blobs") return DataSource::kBlobs;
  if (s == "file") return DataSource::kFile;
  throw ValidationError("unknown data source '" + std::string(s) + "'");
}

// One config key: where it lives, how to read it and how to print it.
// Getters work on a mutable copy so one accessor serves both directions.
struct Key {
  std::string section;
  std::string name;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(ExperimentConfig&)> get;
};

template <typename Ref>
Key scalar_key(std::string section, std::string name, Ref ref) {
  return {std::move(section), std::move(name),
          [ref](ExperimentConfig& c, std::string_view v) { ref(c) = Scalar(to_double(v)); },
          [ref](ExperimentConfig& c) { return format_double(double(ref(c))); }};
}

template <typename Ref>
Key index_key(std::string section, std::string name, Ref ref) {
  return {std::move(section), std::move(name),
          [ref](ExperimentConfig& c, std::string_view v) { ref(c) = static_cast<Index>(to_integer(v)); },
          [ref](ExperimentConfig& c) { return std::to_string(ref(c)); }};
}

template <typename Ref>
Key bool_key(std::string section, std::string name, Ref ref) {
  return {std::move(section), std::move(name), [ref](ExperimentConfig& c, std::string_view v) { ref(c) = to_bool(v); },
          [ref](ExperimentConfig& c) { return std::string(ref(c) ? "true" : "false"); }};
}

template <typename Ref>
Key string_key(std::string section, std::string name, Ref ref) {
  return {std::move(section), std::move(name),
          [ref](ExperimentConfig& c, std::string_view v) { ref(c) = std::string(trim(v)); },
          [ref](ExperimentConfig& c) { return ref(c); }};
}

template <typename Ref, typename Parse, typename Name>
Key enum_key(std::string section, std::string name, Ref ref, Parse parse, Name print) {
  return {std::move(section), std::move(name),
          [ref, parse](ExperimentConfig& c, std::string_view v) { ref(c) = parse(trim(v)); },
          [ref, print](ExperimentConfig& c) { return std::string(print(ref(c))); }};
}

const std::vector<Key>& keys() {
  using C = ExperimentConfig;
  static const std::vector<Key> table = {
      {"", "seed", [](C& c, std::string_view v) {
         const long long s = to_integer(v);
         if (s < 0) throw ValidationError("seed must be >= 0");
         c.seed = static_cast<std::uint64_t>(s);
       },
       [](C& c) { return std::to_string(c.seed); }},
      string_key("", "out", [](C& c) -> std::string& { return c.out; }),

      enum_key("data", "source", [](C& c) -> DataSource& { return c.data.source; }, parse_source, source_name),
      index_key("data", "classes", [](C& c) -> Index& { return c.data.blobs.num_classes; }),
      index_key("data", "per_class", [](C& c) -> Index& { return c.data.blobs.per_class; }),
      index_key("data", "test_per_class", [](C& c) -> Index& { return c.data.test_per_class; }),
      index_key("data", "height", [](C& c) -> Index& { return c.data.blobs.height; }),
      index_key("data", "width", [](C& c) -> Index& { return c.data.blobs.width; }),
      index_key("data", "channels", [](C& c) -> Index& { return c.data.blobs.channels; }),
      scalar_key("data", "separation", [](C& c) -> Scalar& { return c.data.blobs.separation; }),
      scalar_key("data", "noise_sigma", [](C& c) -> Scalar& { return c.data.blobs.noise_sigma; }),
      string_key("data", "train_path", [](C& c) -> std::string& { return c.data.train_path; }),
      string_key("data", "test_path", [](C& c) -> std::string& { return c.data.test_path; }),
      scalar_key("data", "train_fraction", [](C& c) -> Scalar& { return c.data.train_fraction; }),

      index_key("supernet", "cells", [](C& c) -> Index& { return c.supernet.num_cells; }),
      index_key("supernet", "nodes", [](C& c) -> Index& { return c.supernet.num_nodes; }),
      index_key("supernet", "channels", [](C& c) -> Index& { return c.supernet.channels; }),
      index_key("supernet", "stem_multiplier", [](C& c) -> Index& { return c.supernet.stem_multiplier; }),
      bool_key("supernet", "reduction", [](C& c) -> bool& { return c.supernet.use_reduction; }),
      enum_key("supernet", "head", [](C& c) -> HeadKind& { return c.supernet.head; }, parse_head, head_name),
      {"supernet", "ops", [](C& c, std::string_view v) { c.supernet.ops = CandidateOpSet::parse(trim(v)); },
       [](C& c) { return c.supernet.ops.to_string(); }},

      enum_key("generator", "tier", [](C& c) -> GeneratorTier& { return c.generator.tier; }, parse_tier, tier_name),
      index_key("generator", "noise_dim", [](C& c) -> Index& { return c.generator.noise_dim; }),
      index_key("generator", "embedding_dim", [](C& c) -> Index& { return c.generator.label_embedding_dim; }),
      {"generator", "hidden",
       [](C& c, std::string_view v) {
         c.generator.hidden.clear();
         for (std::string_view s : split_list(v)) c.generator.hidden.push_back(static_cast<Index>(to_integer(s)));
       },
       [](C& c) {
         std::string out;
         for (Index h : c.generator.hidden) out += (out.empty() ? "" : ",") + std::to_string(h);
         return out;
       }},
      bool_key("generator", "non_saturating", [](C& c) -> bool& { return c.gan.non_saturating; }),

      scalar_key("weighting", "lambda", [](C& c) -> Scalar& { return c.weighting.lambda; }),
      enum_key("weighting", "m_policy", [](C& c) -> MPolicy& { return c.weighting.m_policy; }, parse_m_policy,
               m_policy_name),
      index_key("weighting", "m_per_class", [](C& c) -> Index& { return c.weighting.m_per_class; }),
      bool_key("weighting", "normalize", [](C& c) -> bool& { return c.weighting.normalize_weights; }),
      bool_key("weighting", "synthetic_only", [](C& c) -> bool& { return c.weighting.synthetic_only; }),
      enum_key("weighting", "reduction", [](C& c) -> SyntheticReduction& { return c.weighting.reduction; },
               parse_reduction, reduction_name),

      scalar_key("rates", "w1", [](C& c) -> Scalar& { return c.trilevel.rates.w1; }),
      scalar_key("rates", "w2", [](C& c) -> Scalar& { return c.trilevel.rates.w2; }),
      scalar_key("rates", "g", [](C& c) -> Scalar& { return c.trilevel.rates.g; }),
      scalar_key("rates", "h", [](C& c) -> Scalar& { return c.trilevel.rates.h; }),
      scalar_key("rates", "a", [](C& c) -> Scalar& { return c.trilevel.rates.a; }),
      bool_key("rates", "cosine", [](C& c) -> bool& { return c.trilevel.rates.cosine; }),
      scalar_key("rates", "floor", [](C& c) -> Scalar& { return c.trilevel.rates.floor; }),

      scalar_key("optimizer", "w_momentum", [](C& c) -> Scalar& { return c.trilevel.w_optimizer.momentum; }),
      scalar_key("optimizer", "w_weight_decay", [](C& c) -> Scalar& { return c.trilevel.w_optimizer.weight_decay; }),
      scalar_key("optimizer", "w_clip_norm", [](C& c) -> Scalar& { return c.trilevel.w_optimizer.clip_norm; }),
      scalar_key("optimizer", "gan_beta1", [](C& c) -> Scalar& { return c.trilevel.gan_optimizer.beta1; }),
      scalar_key("optimizer", "gan_beta2", [](C& c) -> Scalar& { return c.trilevel.gan_optimizer.beta2; }),
      scalar_key("optimizer", "gan_weight_decay",
                 [](C& c) -> Scalar& { return c.trilevel.gan_optimizer.weight_decay; }),
      scalar_key("optimizer", "arch_beta1", [](C& c) -> Scalar& { return c.trilevel.arch_optimizer.beta1; }),
      scalar_key("optimizer", "arch_beta2", [](C& c) -> Scalar& { return c.trilevel.arch_optimizer.beta2; }),
      scalar_key("optimizer", "arch_weight_decay",
                 [](C& c) -> Scalar& { return c.trilevel.arch_optimizer.weight_decay; }),

      enum_key("hypergrad", "mode", [](C& c) -> HypergradMode& { return c.trilevel.hypergrad.mode; },
               parse_hypergrad_mode, hypergrad_mode_name),
      scalar_key("hypergrad", "hvp_eps", [](C& c) -> Scalar& { return c.trilevel.hypergrad.hvp_eps; }),

      index_key("search", "iterations", [](C& c) -> Index& { return c.search_iterations; }),
      index_key("search", "epochs", [](C& c) -> Index& { return c.search_epochs; }),
      index_key("search", "batch", [](C& c) -> Index& { return c.batch; }),
      scalar_key("search", "arch_init_scale", [](C& c) -> Scalar& { return c.arch_init_scale; }),

      index_key("eval", "epochs", [](C& c) -> Index& { return c.eval.epochs; }),
      index_key("eval", "batch", [](C& c) -> Index& { return c.eval.batch; }),
      index_key("eval", "copies", [](C& c) -> Index& { return c.eval.copies; }),
      index_key("eval", "channels", [](C& c) -> Index& { return c.eval.channels; }),
      scalar_key("eval", "lr", [](C& c) -> Scalar& { return c.eval.optimizer.lr; }),
      scalar_key("eval", "momentum", [](C& c) -> Scalar& { return c.eval.optimizer.momentum; }),
      scalar_key("eval", "weight_decay", [](C& c) -> Scalar& { return c.eval.optimizer.weight_decay; }),
      scalar_key("eval", "clip_norm", [](C& c) -> Scalar& { return c.eval.optimizer.clip_norm; }),
      bool_key("eval", "cosine", [](C& c) -> bool& { return c.eval.cosine; }),
      scalar_key("eval", "floor", [](C& c) -> Scalar& { return c.eval.floor; }),

      {"ablate", "lambdas",
       [](C& c, std::string_view v) {
         c.ablate.lambdas.clear();
         for (std::string_view s : split_list(v)) c.ablate.lambdas.push_back(Scalar(to_double(s)));
       },
       [](C& c) {
         std::string out;
         for (Scalar l : c.ablate.lambdas) out += (out.empty() ? "" : ",") + format_double(double(l));
         return out;
       }},
      index_key("ablate", "seeds", [](C& c) -> Index& { return c.ablate.seeds; }),
      {"ablate", "tiers",
       [](C& c, std::string_view v) {
         c.ablate.tiers.clear();
         for (std::string_view s : split_list(v)) c.ablate.tiers.push_back(parse_tier(s));
       },
       [](C& c) {
         std::string out;
         for (GeneratorTier t : c.ablate.tiers) out += (out.empty() ? "" : ",") + std::string(tier_name(t));
         return out;
       }},
  };
  return table;
}

std::string qualified(const std::string& section, const std::string& name) {
  return section.empty() ? name : section + "." + name;
}

}  // namespace

void DataConfig::validate() const {
  if (!(train_fraction > 0 && train_fraction < 1)) throw ValidationError("data.train_fraction must lie in (0, 1)");
  if (source == DataSource::kBlobs) {
    if (blobs.num_classes < 2) throw ValidationError("data.classes must be >= 2");
    if (blobs.per_class < 2) throw ValidationError("data.per_class must be >= 2");
    if (test_per_class < 1) throw ValidationError("data.test_per_class must be >= 1");
    if (blobs.height < 1 || blobs.width < 1 || blobs.channels < 1) throw ValidationError("data shape must be positive");
    if (!(blobs.separation >= 0)) throw ValidationError("data.separation must be >= 0");
    if (!(blobs.noise_sigma > 0)) throw ValidationError("data.noise_sigma must be > 0");
  } else {
    if (train_path.empty()) throw ValidationError("data.train_path is required for file data");
    if (test_path.empty()) throw ValidationError("data.test_path is required for file data");
  }
}

void EvalConfig::validate() const {
  if (epochs < 1) throw ValidationError("eval.epochs must be >= 1");
  if (batch < 2) throw ValidationError("eval.batch must be >= 2");
  if (copies < 1) throw ValidationError("eval.copies must be >= 1");
  if (channels < 1) throw ValidationError("eval.channels must be >= 1");
  if (!(floor >= 0)) throw ValidationError("eval.floor must be >= 0");
  optimizer.validate();
}

void AblationConfig::validate() const {
  if (lambdas.empty()) throw ValidationError("ablate.lambdas must not be empty");
  for (Scalar l : lambdas) {
    if (!(l >= 0)) throw ValidationError("ablate.lambdas must be >= 0");
  }
  if (seeds < 1) throw ValidationError("ablate.seeds must be >= 1");
  if (tiers.empty()) throw ValidationError("ablate.tiers must not be empty");
}

void ExperimentConfig::validate() const {
  data.validate();
  if (batch < 2) throw ValidationError("search.batch must be >= 2");
  if (search_iterations < 0 || search_epochs < 0) throw ValidationError("search budget must be >= 0");
  // Shapes follow the data; a placeholder set checks the rest.
  SupernetSpec s = supernet;
  s.num_classes = std::max<Index>(data.blobs.num_classes, 2);
  s.validate();
  GeneratorSpec g = generator;
  g.num_classes = s.num_classes;
  g.height = s.input_height;
  g.width = s.input_width;
  g.channels = s.input_channels;
  g.validate();
  weighting.validate();
  TrilevelOptions t = trilevel;
  t.weighting = weighting;
  t.validate();
  eval.validate();
  ablate.validate();
  search_options().validate();
}

NeuralProblemSpec ExperimentConfig::problem_spec(const LabeledImageSet& train) const {
  NeuralProblemSpec p;
  p.supernet = supernet;
  p.supernet.num_classes = train.num_classes;
  p.supernet.input_height = train.height();
  p.supernet.input_width = train.width();
  p.supernet.input_channels = train.channels();
  p.generator = generator;
  p.generator.num_classes = train.num_classes;
  p.generator.height = train.height();
  p.generator.width = train.width();
  p.generator.channels = train.channels();
  p.gan = gan;
  p.weighting = weighting;
  p.batch = batch;
  p.seed = seed;
  p.validate();
  return p;
}

SupernetSpec ExperimentConfig::eval_spec(const LabeledImageSet& train) const {
  SupernetSpec s = problem_spec(train).supernet;
  s.num_cells = eval.copies;
  s.channels = eval.channels;
  return s;
}

SearchOptions ExperimentConfig::search_options() const {
  SearchOptions o;
  o.trilevel = trilevel;
  o.trilevel.weighting = weighting;
  o.epochs = search_epochs;
  o.iterations = search_iterations;
  o.arch_init_scale = arch_init_scale;
  o.config_hash = config_hash(*this);
  return o;
}

ExperimentConfig parse_config(std::string_view text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }

  ExperimentConfig config;
  std::set<std::string> sections;
  for (const Key& k : keys()) sections.insert(k.section);
  auto find_key = [](const std::string& section, const std::string& name) -> const Key* {
    for (const Key& k : keys()) {
      if (k.section == section && k.name == name) return &k;
    }
    return nullptr;
  };
  auto apply = [&](const std::string& section, const std::string& name, const std::string& value) {
    const Key* key = find_key(section, name);
    if (!key) throw ConfigError("unknown config key '" + qualified(section, name) + "'");
    try {
      key->set(config, value);
    } catch (const Error& e) {
      throw ConfigError("config key '" + qualified(section, name) + "': " + e.what());
    }
  };
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      if (sections.count(name) && node.data().empty()) continue;  // an empty [section]
      apply("", name, node.data());
      continue;
    }
    if (!sections.count(name) || name.empty()) throw ConfigError("unknown config section [" + name + "]");
    for (const auto& [key, leaf] : node) {
      if (!leaf.empty()) throw ConfigError("config key '" + qualified(name, key) + "' is nested too deeply");
      apply(name, key, leaf.data());
    }
  }
  try {
    config.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string format_config(const ExperimentConfig& config) {
  ExperimentConfig copy = config;
  std::string out;
  std::string section = "\x01";
  for (const Key& k : keys()) {
    if (k.section != section) {
      section = k.section;
      if (!section.empty()) out += "\n[" + section + "]\n";
    }
    out += k.name + " = " + k.get(copy) + "\n";
  }
  return out;
}

std::string config_hash(const ExperimentConfig& config) {
  // Where a run writes does not change what it computes.
  ExperimentConfig c = config;
  c.out.clear();
  return hex64(fnv1a(format_config(c)));
}

}  // namespace lfm
