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

#include <chrono>
#include <cstdio>
#include <ostream>

#include "byte_io.hpp"
#include "lfm/harness.hpp"
#include "lfm/hash.hpp"

namespace lfm {
namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void require_compatible(const LabeledImageSet& a, const LabeledImageSet& b, const std::string& what) {
  if (a.num_classes != b.num_classes || a.height() != b.height() || a.width() != b.width() ||
      a.channels() != b.channels()) {
    throw ValidationError(what + ": class count or image shape differs from the training set");
  }
}

LabeledImageSet concatenate(const LabeledImageSet& a, const LabeledImageSet& b) {
  require_compatible(a, b, "concatenate");
  LabeledImageSet out;
  out.num_classes = a.num_classes;
  Shape shape = a.images.shape();
  shape[0] = a.size() + b.size();
  Tensor::Array data(a.images.size() + b.images.size());
  data << a.images.array(), b.images.array();
  out.images = Tensor(shape, std::move(data));
  out.labels = a.labels;
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  return out;
}

}  // namespace

ExperimentData load_experiment_data(const ExperimentConfig& config) {
  const DataConfig& d = config.data;
  ExperimentData out;
  LabeledImageSet pool;
  if (d.source == DataSource::kBlobs) {
    BlobOptions b = d.blobs;
    b.per_class = d.blobs.per_class + d.test_per_class;
    b.seed = config.seed;
    const BlobSet blobs = synth_blobs(b);
    SplitSpec held_out;
    held_out.train_fraction = Scalar(d.blobs.per_class) / Scalar(b.per_class);
    held_out.seed = config.seed + 1;
    std::tie(pool, out.test) = split(blobs.data, held_out);
  } else {
    pool = load_binary(d.train_path);
    out.test = load_binary(d.test_path);
    require_compatible(pool, out.test, "test set '" + d.test_path + "'");
  }
  SplitSpec s;
  s.train_fraction = d.train_fraction;
  s.seed = config.seed + 2;
  std::tie(out.train, out.val) = split(pool, s);
  return out;
}

Index parameter_count(const WeightSet& weights) {
  Index n = 0;
  for (const auto& [name, t] : weights) n += t.size();
  return n;
}

TrainedNetwork train_network(const Network& net, const LabeledImageSet& data, const EvalConfig& config,
                             std::uint64_t seed) {
  config.validate();
  if (data.size() < 2) throw ValidationError("evaluation training needs at least two examples");
  TrainedNetwork out;
  Optimizer opt(config.optimizer);
  Vector w = flatten(net.weights);
  BatchSampler sampler(data.size(), config.batch, seed);
  const Index per_epoch = sampler.batches_per_epoch();
  for (Index epoch = 0; epoch < config.epochs; ++epoch) {
    opt.set_lr(config.cosine ? cosine_rate(config.optimizer.lr, config.floor, epoch, config.epochs)
                             : config.optimizer.lr);
    Scalar total = 0;
    for (Index b = 0; b < per_epoch; ++b) {
      const Batch batch = make_batch(data, sampler.next());
      Bindings bind;
      const WeightSet weights = unflatten(w, net.weights);
      bind.bind(weights).bind(kImages, batch.images).bind(kLabels, batch.labels);
      const Evaluation eval = forward(net.graph, bind, {kLoss});
      total += eval.output(kLoss).item();
      opt.step(w, flatten(backward(eval, kLoss)));
      if (!w.allFinite()) throw NonFiniteError("evaluation training diverged in epoch " + std::to_string(epoch));
    }
    out.epoch_loss.push_back(total / Scalar(per_epoch));
  }
  out.weights = unflatten(w, net.weights);
  return out;
}

SearchReport cmd_search(const ExperimentConfig& config, const std::filesystem::path& out_dir, std::ostream* log) {
  const auto t0 = std::chrono::steady_clock::now();
  config.validate();
  const ExperimentData data = load_experiment_data(config);
  NeuralTrilevelProblem problem(config.problem_spec(data.train), data.train, data.val);
  const SearchOptions options = config.search_options();

  const Index classes = data.train.num_classes;
  SearchObserver observer;
  if (log) {
    observer = [&](const IterationRecord& r, const TrilevelState&) {
      if (r.iteration % 10 != 0) return;
      char line[160];
      std::snprintf(line, sizeof(line), "iter %4lld  epoch %3lld  loss_w1 %.4f  val %.4f  |dA| %.3e\n",
                    static_cast<long long>(r.iteration), static_cast<long long>(r.epoch), double(r.loss_w1),
                    double(r.val_loss), double(r.grad_norm_a));
      *log << line << std::flush;
    };
  }
  const SearchResult result = run_search(problem, options, observer);

  SearchReport report;
  report.config_hash = options.config_hash;
  report.genotype = result.genotype;
  report.iterations = static_cast<Index>(result.records.size());
  report.aborted = result.aborted;
  report.abort_reason = result.abort_reason;
  std::filesystem::create_directories(out_dir);
  report.genotype_path = out_dir / "genotype.txt";
  report.metrics_path = out_dir / "metrics.csv";
  report.checkpoint_path = out_dir / "checkpoint.lfmk";
  detail::write_file(report.genotype_path, format_genotype(result.genotype));
  detail::write_file(report.metrics_path, format_metrics_csv(result.records, classes, report.config_hash));
  save_checkpoint(checkpoint_from_state(result.state, report.config_hash), report.checkpoint_path);
  report.seconds = seconds_since(t0);
  return report;
}

void check_genotype_ops(const Genotype& genotype, const CandidateOpSet& ops, bool force) {
  auto check_cell = [&](const DiscreteCell& cell) {
    for (const auto& node : cell.nodes) {
      for (const Gene& gene : node) {
        if (!ops.index_of(gene.op)) {
          throw ValidationError("genotype uses op '" + std::string(op_id_name(gene.op)) +
                                "', which is not in the configured op set " + ops.to_string());
        }
      }
    }
  };
  check_cell(genotype.normal);
  if (genotype.reduce) check_cell(*genotype.reduce);
  if (!force && genotype.ops.hash() != ops.hash()) {
    throw ValidationError("genotype op-set hash " + hex64(genotype.ops.hash()) + " differs from the configured " +
                          hex64(ops.hash()) + " (pass --force to evaluate anyway)");
  }
}

EvaluateReport cmd_evaluate(const Genotype& genotype, const ExperimentConfig& config,
                            const std::filesystem::path& out_dir, bool force) {
  const auto t0 = std::chrono::steady_clock::now();
  config.validate();
  check_genotype_ops(genotype, config.supernet.ops, force);
  const ExperimentData data = load_experiment_data(config);
  const LabeledImageSet train = concatenate(data.train, data.val);
  const Network net = build_eval_network(genotype, config.eval_spec(data.train), config.seed + 3);
  const TrainedNetwork trained = train_network(net, train, config.eval, config.seed + 4);
  const Tensor logits = predict(net, trained.weights, nullptr, data.test.images, 256);

  EvaluateReport report;
  report.config_hash = config_hash(config);
  report.copies = config.eval.copies;
  report.parameters = parameter_count(net.weights);
  report.test_accuracy = accuracy(logits, data.test.labels);
  report.test_error = 1 - report.test_accuracy;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    report.report_path = out_dir / "evaluation.csv";
    char row[160];
    std::snprintf(row, sizeof(row), "%lld,%lld,%lld,%.10g,%.10g\n", static_cast<long long>(report.copies),
                  static_cast<long long>(report.parameters), static_cast<long long>(data.test.size()),
                  double(report.test_accuracy), double(report.test_error));
    std::string csv = "# config_hash " + report.config_hash + "\n";
    csv += "# genotype_config_hash " + (genotype.config_hash.empty() ? "none" : genotype.config_hash) + "\n";
    csv += "copies,parameters,test_examples,test_accuracy,test_error\n";
    csv += row;
    detail::write_file(report.report_path, csv);
  }
  report.seconds = seconds_since(t0);
  return report;
}

Index cmd_convert(const std::filesystem::path& root, const RawImportOptions& options,
                  const std::filesystem::path& out_file) {
  const LabeledImageSet data = import_image_directory(root, options);
  if (out_file.has_parent_path()) std::filesystem::create_directories(out_file.parent_path());
  save_binary(data, out_file);
  return data.size();
}

}  // namespace lfm
