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

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lfm/tensor.hpp"

namespace lfm {

// Images are NHWC with pixels in [-1, 1].
struct LabeledImageSet {
  Tensor images;
  std::vector<Index> labels;
  Index num_classes = 0;

  Index size() const { return static_cast<Index>(labels.size()); }
  Index height() const { return images.dim(1); }
  Index width() const { return images.dim(2); }
  Index channels() const { return images.dim(3); }
  Index image_size() const { return height() * width() * channels(); }
  std::span<const Scalar> image(Index i) const {
    return images.values().subspan(static_cast<std::size_t>(i * image_size()),
                                   static_cast<std::size_t>(image_size()));
  }
  std::vector<Index> class_counts() const;
  LabeledImageSet subset(std::span<const Index> indices) const;
  // Throws ValidationError on labels outside [0, C), bad shapes or pixels
  // outside [-1, 1].
  void validate() const;
};

// Labels as a float tensor, the form graph inputs take.
Tensor labels_tensor(std::span<const Index> labels);

struct SplitSpec {
  Scalar train_fraction = Scalar(0.5);
  std::uint64_t seed = 0;
  bool stratified = true;
};

struct SplitIndices {
  std::vector<Index> first;
  std::vector<Index> second;
};

// Partitions example indices. Under stratification every class is split
// with largest-remainder rounding so the overall first-side size is
// round(fraction * N); each side keeps at least one example per class.
SplitIndices split_indices(std::span<const Index> labels, Index num_classes, const SplitSpec& spec);
std::pair<LabeledImageSet, LabeledImageSet> split(const LabeledImageSet& dataset, const SplitSpec& spec);

// The same records with roles flipped: the label conditions the
// generator and the image is its target. Does not copy pixels.
class CigView {
 public:
  struct Record {
    Index condition;
    std::span<const Scalar> target;
  };

  explicit CigView(const LabeledImageSet& base) : base_(&base) {}
  Index size() const { return base_->size(); }
  Record operator[](Index i) const { return {base_->labels[static_cast<std::size_t>(i)], base_->image(i)}; }
  const LabeledImageSet& base() const { return *base_; }

 private:
  const LabeledImageSet* base_;
};

inline CigView make_cig_view(const LabeledImageSet& train) { return CigView(train); }

struct BlobOptions {
  Index num_classes = 4;
  Index per_class = 64;
  Index height = 8;
  Index width = 8;
  Index channels = 1;
  Scalar separation = 4;
  Scalar noise_sigma = 1;
  std::uint64_t seed = 0;
};

struct BlobSet {
  LabeledImageSet data;
  // Class templates [C, H, W, channels] and the noise level, both in the
  // normalized pixel scale of `data`.
  Tensor templates;
  Scalar noise_sigma = 0;
};

// Class c is template_c + N(0, sigma^2) per pixel, where
// template_c = separation * u_c and the u_c are distinct orthonormal
// low-frequency cosine patterns (no constant pattern) with seeded choice
// and sign. The whole set is then mapped affinely onto [-1, 1]. Pixels are
// rounded to float precision so the binary container is lossless.
BlobSet synth_blobs(const BlobOptions& options);

// Index of the nearest template (Euclidean) for each image.
std::vector<Index> nearest_template(const LabeledImageSet& data, const Tensor& templates);

// Seeded epoch-wise shuffling; batches wrap into the next epoch.
class BatchSampler {
 public:
  BatchSampler(Index n, Index batch, std::uint64_t seed);
  std::vector<Index> next();
  Index epoch() const { return epoch_; }
  Index batches_per_epoch() const { return (n_ + batch_ - 1) / batch_; }

 private:
  void reshuffle();

  Index n_, batch_;
  std::mt19937_64 rng_;
  std::vector<Index> order_;
  std::size_t cursor_ = 0;
  Index epoch_ = 0;
};

struct Batch {
  Tensor images;
  Tensor labels;  // float class ids
  std::vector<Index> label_ids;
};
Batch make_batch(const LabeledImageSet& data, std::span<const Index> indices);

// "LFMC" container, little-endian: magic, version u16, C u16, N u32,
// H u16, W u16, channels u8, then N records of (label u16, H*W*channels
// float32).
inline constexpr std::uint16_t kLfmcVersion = 1;
std::string encode_lfmc(const LabeledImageSet& data);
// Throws ParseError (with byte offset) on malformed input and
// ValidationError on out-of-range labels or pixels.
LabeledImageSet decode_lfmc(std::string_view bytes);
void save_binary(const LabeledImageSet& data, const std::filesystem::path& path);
LabeledImageSet load_binary(const std::filesystem::path& path);

// Raw image import: one subdirectory per class (sorted by name gives the
// class id) holding binary PGM/PPM files or headerless u8 files of the
// given shape. Bytes map to [-1, 1] as b / 127.5 - 1.
struct RawImportOptions {
  Index height = 0;  // required for headerless files
  Index width = 0;
  Index channels = 1;
};
LabeledImageSet import_image_directory(const std::filesystem::path& root, const RawImportOptions& options);

}  // namespace lfm
