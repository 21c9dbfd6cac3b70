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

#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>

#include "byte_io.hpp"
#include "lfm/harness.hpp"

namespace lfm::cli {
namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> mode;
  std::optional<double> lambda;
};

ExperimentConfig resolve_config(const Overrides& o) {
  if (o.config.empty()) throw ConfigError("--config is required for this command");
  ExperimentConfig c = load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out = *o.out;
  try {
    if (o.mode) c.trilevel.hypergrad.mode = parse_hypergrad_mode(*o.mode);
  } catch (const Error& e) {
    throw ConfigError(std::string("--mode: ") + e.what());
  }
  if (o.lambda) c.weighting.lambda = Scalar(*o.lambda);
  try {
    c.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("invalid config after overrides: ") + e.what());
  }
  return c;
}

HypergradTerm parse_term(const std::string& name) {
  for (HypergradTerm t : kAllHypergradTerms) {
    if (term_name(t) == name) return t;
  }
  std::string known;
  for (HypergradTerm t : kAllHypergradTerms) known += (known.empty() ? "" : ", ") + std::string(term_name(t));
  throw ConfigError("unknown hypergradient term '" + name + "' (" + known + ")");
}

Index env_workers() {
  const char* v = std::getenv("LFM_THREADS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) throw ConfigError("LFM_THREADS must be a positive integer, got '" + std::string(v) + "'");
  return static_cast<Index>(n);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tri-level architecture search with class-weighted synthetic data", "lfmcw"};
  app.require_subcommand(1);
  Overrides o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config,-c", o.config, "INI config file")->required();
    sub->add_option("--seed", o.seed, "override the config seed");
    sub->add_option("--out,-o", o.out, "output directory");
    sub->add_option("--mode", o.mode, "hypergradient mode")->check(CLI::IsMember({"first", "second"}));
    sub->add_option("--lambda", o.lambda, "synthetic-loss weight");
  };

  CLI::App* search = app.add_subcommand("search", "search a cell on the configured data");
  add_common(search);

  CLI::App* evaluate = app.add_subcommand("evaluate", "train a searched cell from scratch and score the test set");
  add_common(evaluate);
  std::string genotype_path;
  bool force = false;
  std::optional<Index> copies;
  evaluate->add_option("genotype", genotype_path, "genotype file written by search")->required();
  evaluate->add_flag("--force", force, "evaluate despite an op-set hash mismatch");
  evaluate->add_option("--copies", copies, "cells in the evaluation network");

  CLI::App* ablate = app.add_subcommand("ablate", "run a study grid of search and evaluation");
  add_common(ablate);
  std::string study = "lambda_sweep";
  std::optional<Index> workers;
  ablate->add_option("--study", study, "lambda_sweep, synthetic_only or generator_capacity");
  ablate->add_option("--workers", workers, "concurrent runs (default LFM_THREADS or 1)");

  CLI::App* verify = app.add_subcommand("verify", "run the gradient and hypergradient checks");
  std::optional<std::string> negate;
  Index instances = 100;
  verify->add_option("--negate-term", negate, "flip one hypergradient term (the checks must then fail)");
  verify->add_option("--instances", instances, "random quadratic problems")->check(CLI::PositiveNumber);

  CLI::App* convert = app.add_subcommand("convert", "pack a raw image directory into an LFMC file");
  std::string root, out_file;
  RawImportOptions raw;
  convert->add_option("root", root, "directory with one subdirectory per class")->required();
  convert->add_option("output", out_file, "LFMC file to write")->required();
  convert->add_option("--height", raw.height, "image height for headerless files");
  convert->add_option("--width", raw.width, "image width for headerless files");
  convert->add_option("--channels", raw.channels, "channels for headerless files");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    if (!reversed.empty()) reversed.pop_back();  // program name
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (search->parsed()) {
      const ExperimentConfig c = resolve_config(o);
      const SearchReport r = cmd_search(c, c.out, &out);
      out << "config_hash " << r.config_hash << "\n";
      out << "genotype    " << r.genotype_path.string() << "\n";
      out << "metrics     " << r.metrics_path.string() << "\n";
      out << "checkpoint  " << r.checkpoint_path.string() << "\n";
      char line[96];
      std::snprintf(line, sizeof(line), "%lld iterations in %.1f s\n", static_cast<long long>(r.iterations),
                    r.seconds);
      out << line;
      if (r.aborted) {
        err << "search aborted: " << r.abort_reason << "\n";
        return kExitFailure;
      }
    } else if (evaluate->parsed()) {
      ExperimentConfig c = resolve_config(o);
      if (copies) {
        c.eval.copies = *copies;
        try {
          c.validate();
        } catch (const ValidationError& e) {
          throw ConfigError(std::string("--copies: ") + e.what());
        }
      }
      const Genotype g = parse_genotype(detail::read_file(genotype_path));
      const EvaluateReport r = cmd_evaluate(g, c, c.out, force);
      char line[160];
      std::snprintf(line, sizeof(line), "copies %lld  parameters %lld  test accuracy %.4f  test error %.4f  (%.1f s)\n",
                    static_cast<long long>(r.copies), static_cast<long long>(r.parameters),
                    double(r.test_accuracy), double(r.test_error), r.seconds);
      out << line << "report " << r.report_path.string() << "\n";
    } else if (ablate->parsed()) {
      const ExperimentConfig c = resolve_config(o);
      const Study s = parse_study(study);
      const Index w = workers ? *workers : env_workers();
      if (w < 1) throw ConfigError("--workers must be >= 1");
      const AblationReport r = cmd_ablate(c, s, c.out, w, &out);
      Index failed = 0;
      for (const AblationRun& run : r.runs) failed += run.ok ? 0 : 1;
      out << "runs    " << r.runs_path.string() << "\n";
      out << "summary " << r.summary_path.string() << "\n";
      out << "plot    " << r.plot_path.string() << "\n";
      if (failed > 0) {
        err << failed << " of " << r.runs.size() << " runs failed\n";
        return kExitFailure;
      }
    } else if (verify->parsed()) {
      VerifyOptions v;
      if (negate) v.negate_term = parse_term(*negate);
      v.quadratic_instances = instances;
      const std::vector<VerifyCheck> checks = cmd_verify(v, &out);
      Index failed = 0;
      for (const VerifyCheck& c : checks) failed += c.passed ? 0 : 1;
      out << (failed == 0 ? "all " + std::to_string(checks.size()) + " checks passed"
                          : std::to_string(failed) + " of " + std::to_string(checks.size()) + " checks failed")
          << "\n";
      if (failed > 0) return kExitFailure;
    } else if (convert->parsed()) {
      const Index n = cmd_convert(root, raw, out_file);
      out << "wrote " << n << " images to " << out_file << "\n";
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace lfm::cli
