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

// The architecture search loop over a neural tri-level problem, its
// per-iteration metrics and the binary checkpoint of the full state.

#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "lfm/neural_problem.hpp"

namespace lfm {

struct SearchOptions {
  TrilevelOptions trilevel;
  Index epochs = 1;
  // Total iterations; 0 runs epochs * batches_per_epoch. When set, the
  // schedule spans ceil(iterations / batches_per_epoch) epochs.
  Index iterations = 0;
  Scalar arch_init_scale = Scalar(1e-3);
  std::string config_hash;

  void validate() const;
};

struct SearchResult {
  TrilevelState state;  // the last finite state
  Genotype genotype;
  std::vector<IterationRecord> records;
  bool aborted = false;
  std::string abort_reason;
};

// Called after every completed iteration.
using SearchObserver = std::function<void(const IterationRecord&, const TrilevelState&)>;

SearchResult run_search(NeuralTrilevelProblem& problem, const SearchOptions& options,
                        const SearchObserver& observer = {});

// Metrics CSV: a "# config_hash" line, the header
//   iteration,epoch,loss_w1,loss_gan_g,loss_gan_h,loss_w2_real,loss_w2_synth,val_loss,l_c_0..,grad_norm_A
// and one row per iteration. Numbers use a fixed %.10g format.
std::string metrics_csv_header(Index num_classes);
std::string metrics_csv_row(const IterationRecord& record);
std::string format_metrics_csv(const std::vector<IterationRecord>& records, Index num_classes,
                               std::string_view config_hash);

// "LFMK" checkpoint, little-endian: magic, version u16, config-hash length
// u16 and bytes, entry count u32, then per entry: name length u16, name,
// kind u8 (0 = float64 vector, 1 = i64 counter), length u64 and payload.
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string config_hash;
  std::map<std::string, Vector> vectors;
  std::map<std::string, Index> counters;
};

Checkpoint checkpoint_from_state(const TrilevelState& state, std::string config_hash);
// Restores variables, moment buffers and step counts into `state`, which
// must already carry optimizers built for the same run.
void restore_state(const Checkpoint& checkpoint, TrilevelState& state);

std::string encode_checkpoint(const Checkpoint& checkpoint);
// Throws ParseError with the byte offset on malformed input.
Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Fraction of correct argmax predictions.
Scalar accuracy(const Tensor& logits, std::span<const Index> labels);

// Accuracy of the relaxed supernet with weights `w` on a whole set.
Scalar supernet_accuracy(const NeuralTrilevelProblem& problem, const Vector& a, const Vector& w,
                         const LabeledImageSet& data);

}  // namespace lfm
