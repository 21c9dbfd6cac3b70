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

// Experiment configuration and the search / evaluate / ablate / verify /
// convert commands behind the command-line front end.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lfm/search.hpp"

namespace lfm {

enum class DataSource { kBlobs, kFile };

struct DataConfig {
  DataSource source = DataSource::kBlobs;
  // Blob sets: per_class examples per class go to D_tr and D_val, another
  // test_per_class per class are held out for evaluation. All share the
  // class templates.
  BlobOptions blobs{.num_classes = 4, .per_class = 128, .separation = 3};
  Index test_per_class = 100;
  // LFMC files: `train_path` is split into D_tr and D_val.
  std::string train_path;
  std::string test_path;
  Scalar train_fraction = Scalar(0.5);

  void validate() const;
};

// Training of the discretized network from scratch.
struct EvalConfig {
  Index epochs = 40;
  Index batch = 32;
  Index copies = 4;  // cells stacked in the evaluation network
  Index channels = 8;
  OptimizerConfig optimizer = OptimizerConfig::sgd(0.05, 0.9, 3e-4, 5);
  bool cosine = true;
  Scalar floor = Scalar(1e-3);

  void validate() const;
};

struct AblationConfig {
  std::vector<Scalar> lambdas{0, 0.1, 0.5, 1, 2, 3};
  Index seeds = 3;
  std::vector<GeneratorTier> tiers{GeneratorTier::kTiny, GeneratorTier::kSmall, GeneratorTier::kMedium};

  void validate() const;
};

struct ExperimentConfig {
  DataConfig data;
  SupernetSpec supernet;
  GeneratorSpec generator;
  GanOptions gan;
  WeightingConfig weighting;
  TrilevelOptions trilevel;  // its weighting is replaced by `weighting`
  Index search_epochs = 0;   // used when search_iterations is 0
  Index search_iterations = 200;
  Index batch = 32;
  Scalar arch_init_scale = Scalar(1e-3);
  EvalConfig eval;
  AblationConfig ablate;
  std::uint64_t seed = 0;
  std::string out = "runs/default";

  void validate() const;

  // Network shapes follow the data: classes, image size and channels.
  NeuralProblemSpec problem_spec(const LabeledImageSet& train) const;
  SupernetSpec eval_spec(const LabeledImageSet& train) const;
  SearchOptions search_options() const;
};

// INI text with [sections]. Unknown sections or keys, malformed values and
// failed validation throw ConfigError naming the key.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);
// Every key with its current value, in a fixed order; parse_config of the
// result reproduces the config.
std::string format_config(const ExperimentConfig& config);
// FNV-1a of format_config without the output directory, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

// D_tr, D_val and the held-out test set.
struct ExperimentData {
  LabeledImageSet train, val, test;
};
ExperimentData load_experiment_data(const ExperimentConfig& config);

// ---- evaluation training --------------------------------------------------

struct TrainedNetwork {
  WeightSet weights;
  std::vector<Scalar> epoch_loss;
};

// Minibatch training of a fixed network on `data`.
TrainedNetwork train_network(const Network& net, const LabeledImageSet& data, const EvalConfig& config,
                             std::uint64_t seed);

Index parameter_count(const WeightSet& weights);

// ---- commands -------------------------------------------------------------

struct SearchReport {
  std::string config_hash;
  Genotype genotype;
  std::filesystem::path genotype_path, metrics_path, checkpoint_path;
  Index iterations = 0;
  bool aborted = false;
  std::string abort_reason;
  double seconds = 0;
};

// Writes genotype.txt, metrics.csv and checkpoint.lfmk under `out_dir`.
// On a non-finite abort the artifacts hold the last finite state and the
// report is marked aborted.
SearchReport cmd_search(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                        std::ostream* log = nullptr);

struct EvaluateReport {
  std::string config_hash;
  Index copies = 0;
  Index parameters = 0;
  Scalar test_accuracy = 0;
  Scalar test_error = 0;
  std::filesystem::path report_path;
  double seconds = 0;
};

// Refuses (ValidationError) a genotype naming an op outside the configured
// set, and one whose op-set hash differs unless `force`.
void check_genotype_ops(const Genotype& genotype, const CandidateOpSet& ops, bool force);

// Trains the genotype's network on D_tr and D_val and scores the test set.
// Writes evaluation.csv under `out_dir` when it is not empty.
EvaluateReport cmd_evaluate(const Genotype& genotype, const ExperimentConfig& config,
                            const std::filesystem::path& out_dir, bool force = false);

enum class Study { kLambdaSweep, kSyntheticOnly, kGeneratorCapacity };
std::string_view study_name(Study study);
Study parse_study(std::string_view name);

struct AblationRun {
  std::string point;  // e.g. "lambda=0.5", "synthetic_only", "tier=small"
  std::string mode;   // "default" or "synthetic_only"
  Scalar lambda = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  Scalar test_error = 0;
  std::string genotype;  // one-line summary
  std::string error;     // failure message of the sub-run
};

struct AblationReport {
  std::string config_hash;
  Study study = Study::kLambdaSweep;
  std::vector<AblationRun> runs;
  std::filesystem::path runs_path, summary_path, plot_path;
};

// Runs the study grid, one search and evaluation per point and seed. A
// failing sub-run is recorded and the grid continues. `workers` > 1 runs
// independent points concurrently.
AblationReport cmd_ablate(const ExperimentConfig& config, Study study, const std::filesystem::path& out_dir,
                          Index workers = 1, std::ostream* log = nullptr);

// Summary rows: one per point and mode with mean and sample std of the test
// error over successful seeds.
struct AblationSummaryRow {
  std::string point, mode;
  Scalar lambda = 0;
  Index ok = 0, failed = 0;
  Scalar mean_error = 0, std_error = 0;
};
std::vector<AblationSummaryRow> summarize(const std::vector<AblationRun>& runs);
std::string format_ablation_runs(const std::vector<AblationRun>& runs, std::string_view config_hash);
std::string format_ablation_summary(const std::vector<AblationSummaryRow>& rows, std::string_view config_hash);

// Line chart of mean error against the point index (or lambda for the
// sweep) with one-std error bars, one series per mode.
std::string ablation_svg(const std::vector<AblationSummaryRow>& rows, Study study, std::string_view config_hash);

struct VerifyCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerifyOptions {
  // Fault injection: flips one hypergradient term in the neural and
  // quadratic pipelines, so the named checks must fail.
  std::optional<HypergradTerm> negate_term;
  Index quadratic_instances = 100;
  std::uint64_t seed = 0;
};

// Gradient checks of every primitive, quadratic hypergradient agreement,
// unrolled agreement on the tiny neural instance and the lambda = 0 laws.
std::vector<VerifyCheck> cmd_verify(const VerifyOptions& options, std::ostream* log = nullptr);

// Raw image directory to an LFMC file; returns the number of images.
Index cmd_convert(const std::filesystem::path& root, const RawImportOptions& options,
                  const std::filesystem::path& out_file);

}  // namespace lfm
