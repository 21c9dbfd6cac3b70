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

#include "lfm/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "byte_io.hpp"

namespace lfm {

std::vector<Index> LabeledImageSet::class_counts() const {
  std::vector<Index> counts(static_cast<std::size_t>(num_classes), 0);
  for (Index y : labels) ++counts.at(static_cast<std::size_t>(y));
  return counts;
}

LabeledImageSet LabeledImageSet::subset(std::span<const Index> indices) const {
  LabeledImageSet out;
  out.num_classes = num_classes;
  const Index n = static_cast<Index>(indices.size());
  out.images = Tensor({n, height(), width(), channels()});
  const Index d = image_size();
  for (Index i = 0; i < n; ++i) {
    const Index src = indices[static_cast<std::size_t>(i)];
    if (src < 0 || src >= size()) throw ValidationError("subset index out of range");
    out.images.array().segment(i * d, d) = images.array().segment(src * d, d);
    out.labels.push_back(labels[static_cast<std::size_t>(src)]);
  }
  return out;
}

void LabeledImageSet::validate() const {
  if (num_classes < 2) throw ValidationError("dataset needs at least two classes");
  if (images.rank() != 4) throw ValidationError("dataset images must be [N, H, W, channels]");
  if (images.dim(0) != size()) throw ValidationError("dataset image and label counts differ");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw ValidationError("label " + std::to_string(labels[i]) + " of example " + std::to_string(i) +
                            " is outside [0, " + std::to_string(num_classes) + ")");
    }
  }
  if (!images.all_finite() || (images.array().abs() > Scalar(1)).any()) {
    throw ValidationError("dataset pixels must be finite and within [-1, 1]");
  }
}

Tensor labels_tensor(std::span<const Index> labels) {
  Tensor t({static_cast<Index>(labels.size())});
  for (std::size_t i = 0; i < labels.size(); ++i) t[static_cast<Index>(i)] = Scalar(labels[i]);
  return t;
}

SplitIndices split_indices(std::span<const Index> labels, Index num_classes, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0 && spec.train_fraction < 1)) {
    throw ValidationError("split fraction must be in (0, 1)");
  }
  const Index n = static_cast<Index>(labels.size());
  if (n < 2) throw ValidationError("cannot split fewer than two examples");
  std::mt19937_64 rng(spec.seed);
  SplitIndices out;

  if (!spec.stratified) {
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::shuffle(order.begin(), order.end(), rng);
    const Index take = std::clamp<Index>(std::llround(double(spec.train_fraction) * double(n)), 1, n - 1);
    out.first.assign(order.begin(), order.begin() + take);
    out.second.assign(order.begin() + take, order.end());
  } else {
    std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(num_classes));
    for (Index i = 0; i < n; ++i) {
      const Index y = labels[static_cast<std::size_t>(i)];
      if (y < 0 || y >= num_classes) throw ValidationError("label outside the class range");
      by_class[static_cast<std::size_t>(y)].push_back(i);
    }
    // Largest-remainder apportionment of round(f * N) across classes.
    const double f = double(spec.train_fraction);
    const Index target = std::llround(f * double(n));
    std::vector<Index> take(by_class.size());
    std::vector<std::pair<double, Index>> remainders;
    Index assigned = 0;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      const Index nc = static_cast<Index>(by_class[c].size());
      if (nc < 2) {
        throw ValidationError("stratified split: class " + std::to_string(c) + " has " + std::to_string(nc) +
                              " example(s), need at least 2");
      }
      const double exact = f * double(nc);
      take[c] = static_cast<Index>(std::floor(exact));
      assigned += take[c];
      remainders.emplace_back(exact - double(take[c]), static_cast<Index>(c));
    }
    std::shuffle(remainders.begin(), remainders.end(), rng);  // seeded tie-break
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t r = 0; r < remainders.size() && assigned < target; ++r, ++assigned) {
      ++take[static_cast<std::size_t>(remainders[r].second)];
    }
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      auto& idx = by_class[c];
      std::shuffle(idx.begin(), idx.end(), rng);
      const Index k = std::clamp<Index>(take[c], 1, static_cast<Index>(idx.size()) - 1);
      out.first.insert(out.first.end(), idx.begin(), idx.begin() + k);
      out.second.insert(out.second.end(), idx.begin() + k, idx.end());
    }
  }
  std::sort(out.first.begin(), out.first.end());
  std::sort(out.second.begin(), out.second.end());
  return out;
}

std::pair<LabeledImageSet, LabeledImageSet> split(const LabeledImageSet& dataset, const SplitSpec& spec) {
  if (dataset.size() == 0) throw ValidationError("cannot split an empty dataset");
  const SplitIndices s = split_indices(dataset.labels, dataset.num_classes, spec);
  return {dataset.subset(s.first), dataset.subset(s.second)};
}

namespace {

// Orthonormal 2-D DCT-II basis pattern (p, q) on an h x w grid.
Eigen::Array<double, Eigen::Dynamic, 1> cosine_pattern(Index p, Index q, Index h, Index w) {
  Eigen::Array<double, Eigen::Dynamic, 1> out(h * w);
  const double ap = p == 0 ? std::sqrt(1.0 / double(h)) : std::sqrt(2.0 / double(h));
  const double aq = q == 0 ? std::sqrt(1.0 / double(w)) : std::sqrt(2.0 / double(w));
  for (Index i = 0; i < h; ++i) {
    for (Index j = 0; j < w; ++j) {
      out[i * w + j] = ap * aq * std::cos(std::numbers::pi * double(2 * i + 1) * double(p) / double(2 * h)) *
                       std::cos(std::numbers::pi * double(2 * j + 1) * double(q) / double(2 * w));
    }
  }
  return out;
}

}  // namespace

BlobSet synth_blobs(const BlobOptions& o) {
  if (o.num_classes < 2) throw ValidationError("synth_blobs: need at least two classes");
  if (o.per_class < 1 || o.height < 1 || o.width < 1 || o.channels < 1) {
    throw ValidationError("synth_blobs: sizes must be positive");
  }
  if (o.height * o.width - 1 < o.num_classes) {
    throw ValidationError("synth_blobs: image too small for distinct class templates");
  }
  if (o.separation < 0 || o.noise_sigma < 0) throw ValidationError("synth_blobs: negative separation or noise");

  std::mt19937_64 rng(o.seed);
  std::vector<std::pair<Index, Index>> freqs;
  for (Index p = 0; p < o.height; ++p) {
    for (Index q = 0; q < o.width; ++q) {
      if (p + q > 0) freqs.emplace_back(p, q);
    }
  }
  std::stable_sort(freqs.begin(), freqs.end(),
                   [](const auto& a, const auto& b) { return a.first + a.second < b.first + b.second; });
  freqs.resize(static_cast<std::size_t>(std::min<Index>(2 * o.num_classes, static_cast<Index>(freqs.size()))));
  std::shuffle(freqs.begin(), freqs.end(), rng);

  const Index hw = o.height * o.width;
  const Index d = hw * o.channels;
  Eigen::ArrayXXd templates(d, o.num_classes);
  std::bernoulli_distribution coin(0.5);
  for (Index c = 0; c < o.num_classes; ++c) {
    const auto [p, q] = freqs[static_cast<std::size_t>(c)];
    const auto pattern = cosine_pattern(p, q, o.height, o.width);
    const double sign = coin(rng) ? 1.0 : -1.0;
    const double scale = sign * double(o.separation) / std::sqrt(double(o.channels));
    for (Index i = 0; i < hw; ++i) {
      for (Index ch = 0; ch < o.channels; ++ch) templates(i * o.channels + ch, c) = scale * pattern[i];
    }
  }

  const Index n = o.per_class * o.num_classes;
  Eigen::ArrayXd pixels(n * d);
  std::vector<Index> labels(static_cast<std::size_t>(n));
  std::normal_distribution<double> noise(0.0, double(o.noise_sigma));
  for (Index i = 0; i < n; ++i) {
    const Index c = i % o.num_classes;
    labels[static_cast<std::size_t>(i)] = c;
    for (Index k = 0; k < d; ++k) pixels[i * d + k] = templates(k, c) + noise(rng);
  }

  const double lo = std::min(pixels.minCoeff(), templates.minCoeff());
  const double hi = std::max(pixels.maxCoeff(), templates.maxCoeff());
  const double mid = 0.5 * (hi + lo);
  const double half = hi > lo ? 0.5 * (hi - lo) : 1.0;
  auto normalize = [&](double v) {
    return Scalar(std::clamp(static_cast<float>((v - mid) / half), -1.0f, 1.0f));
  };

  BlobSet out;
  out.data.num_classes = o.num_classes;
  out.data.labels = std::move(labels);
  out.data.images = Tensor({n, o.height, o.width, o.channels});
  for (Index i = 0; i < n * d; ++i) out.data.images[i] = normalize(pixels[i]);
  out.templates = Tensor({o.num_classes, o.height, o.width, o.channels});
  for (Index c = 0; c < o.num_classes; ++c) {
    for (Index k = 0; k < d; ++k) out.templates[c * d + k] = Scalar((templates(k, c) - mid) / half);
  }
  out.noise_sigma = Scalar(double(o.noise_sigma) / half);
  return out;
}

std::vector<Index> nearest_template(const LabeledImageSet& data, const Tensor& templates) {
  const Index d = data.image_size();
  const Index c = templates.dim(0);
  const auto t = templates.matrix(c, d);
  const auto x = data.images.matrix(data.size(), d);
  std::vector<Index> out(static_cast<std::size_t>(data.size()));
  for (Index i = 0; i < data.size(); ++i) {
    Index best = 0;
    (t.rowwise() - x.row(i)).rowwise().squaredNorm().minCoeff(&best);
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

BatchSampler::BatchSampler(Index n, Index batch, std::uint64_t seed)
    : n_(n), batch_(std::min(batch, n)), rng_(seed), order_(static_cast<std::size_t>(n)) {
  if (n <= 0 || batch <= 0) throw ValidationError("batch sampler needs positive sizes");
  std::iota(order_.begin(), order_.end(), Index{0});
  reshuffle();
}

void BatchSampler::reshuffle() {
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

std::vector<Index> BatchSampler::next() {
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(batch_));
  while (static_cast<Index>(out.size()) < batch_) {
    if (cursor_ == order_.size()) {
      ++epoch_;
      reshuffle();
    }
    out.push_back(order_[cursor_++]);
  }
  return out;
}

Batch make_batch(const LabeledImageSet& data, std::span<const Index> indices) {
  Batch b;
  const LabeledImageSet s = data.subset(indices);
  b.images = s.images;
  b.label_ids = s.labels;
  b.labels = labels_tensor(s.labels);
  return b;
}

namespace {

constexpr char kMagic[4] = {'L', 'F', 'M', 'C'};
constexpr std::size_t kHeaderBytes = 4 + 2 + 2 + 4 + 2 + 2 + 1;

}  // namespace

std::string encode_lfmc(const LabeledImageSet& data) {
  data.validate();
  auto fits = [](Index v, Index max) { return v >= 0 && v <= max; };
  if (!fits(data.num_classes, 0xffff) || !fits(data.size(), 0xffffffffLL) || !fits(data.height(), 0xffff) ||
      !fits(data.width(), 0xffff) || !fits(data.channels(), 0xff)) {
    throw ValidationError("LFMC: dataset dimensions exceed the container field widths");
  }
  std::string out;
  out.reserve(kHeaderBytes + static_cast<std::size_t>(data.size() * (2 + 4 * data.image_size())));
  out.append(kMagic, 4);
  detail::put<std::uint16_t>(out, kLfmcVersion);
  detail::put<std::uint16_t>(out, static_cast<std::uint16_t>(data.num_classes));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(data.size()));
  detail::put<std::uint16_t>(out, static_cast<std::uint16_t>(data.height()));
  detail::put<std::uint16_t>(out, static_cast<std::uint16_t>(data.width()));
  detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(data.channels()));
  for (Index i = 0; i < data.size(); ++i) {
    detail::put<std::uint16_t>(out, static_cast<std::uint16_t>(data.labels[static_cast<std::size_t>(i)]));
    for (Scalar v : data.image(i)) detail::put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

LabeledImageSet decode_lfmc(std::string_view bytes) {
  detail::ByteReader r(bytes, "LFMC");
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw ParseError("LFMC: bad magic", 0);
  r.get<std::uint32_t>("magic");
  const auto version = r.get<std::uint16_t>("version");
  if (version != kLfmcVersion) throw ParseError("LFMC: unsupported version " + std::to_string(version), 4);
  LabeledImageSet out;
  out.num_classes = r.get<std::uint16_t>("class count");
  const Index n = r.get<std::uint32_t>("record count");
  const Index h = r.get<std::uint16_t>("height");
  const Index w = r.get<std::uint16_t>("width");
  const Index c = r.get<std::uint8_t>("channels");
  if (out.num_classes < 2) throw ValidationError("LFMC: class count must be at least 2");
  if (h == 0 || w == 0 || c == 0) throw ParseError("LFMC: zero image dimension", 12);
  const Index d = h * w * c;
  // check the full length up front so a bogus N cannot trigger a huge allocation
  const std::size_t record = 2 + 4 * static_cast<std::size_t>(d);
  if ((bytes.size() - kHeaderBytes) / record < static_cast<std::size_t>(n)) {
    const std::size_t complete = (bytes.size() - kHeaderBytes) / record;
    throw ParseError("LFMC: truncated in record " + std::to_string(complete) + " of " + std::to_string(n),
                     bytes.size());
  }
  out.images = Tensor({n, h, w, c});
  out.labels.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const std::size_t at = r.pos();
    const Index label = r.get<std::uint16_t>("label");
    if (label >= out.num_classes) {
      throw ValidationError("LFMC: record " + std::to_string(i) + " (byte offset " + std::to_string(at) +
                            ") has label " + std::to_string(label) + " >= class count " +
                            std::to_string(out.num_classes));
    }
    out.labels[static_cast<std::size_t>(i)] = label;
    for (Index k = 0; k < d; ++k) {
      const float v = r.get_f32("pixel");
      if (!std::isfinite(v) || std::abs(v) > 1.0f) {
        throw ValidationError("LFMC: pixel outside [-1, 1] in record " + std::to_string(i));
      }
      out.images[i * d + k] = Scalar(v);
    }
  }
  if (r.pos() != bytes.size()) throw ParseError("LFMC: trailing bytes after the last record", r.pos());
  return out;
}

namespace detail {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("write failed for " + path.string());
}

}  // namespace detail

void save_binary(const LabeledImageSet& data, const std::filesystem::path& path) {
  detail::write_file(path, encode_lfmc(data));
}

LabeledImageSet load_binary(const std::filesystem::path& path) { return decode_lfmc(detail::read_file(path)); }

namespace {

using detail::read_file;

struct RawImage {
  Index h, w, c;
  std::string_view pixels;
};

// Binary PGM (P5) or PPM (P6) with maxval 255.
RawImage parse_netpbm(std::string_view bytes, const std::string& name) {
  std::size_t pos = 2;
  auto next_token = [&]() -> long long {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    long long v = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) v = v * 10 + (bytes[pos++] - '0');
    if (pos == start) throw ParseError(name + ": malformed netpbm header", start);
    return v;
  };
  const Index c = bytes[1] == '5' ? 1 : 3;
  const Index w = next_token();
  const Index h = next_token();
  const long long maxval = next_token();
  if (maxval != 255) throw ParseError(name + ": only maxval 255 is supported", pos);
  ++pos;  // single whitespace before the raster
  const std::size_t need = static_cast<std::size_t>(h * w * c);
  if (bytes.size() < pos + need) throw ParseError(name + ": truncated raster", bytes.size());
  return {h, w, c, bytes.substr(pos, need)};
}

}  // namespace

LabeledImageSet import_image_directory(const std::filesystem::path& root, const RawImportOptions& options) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw ValidationError(root.string() + " is not a directory");
  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) class_dirs.push_back(e.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.size() < 2) throw ValidationError("need at least two class subdirectories");

  std::vector<Scalar> pixels;
  std::vector<Index> labels;
  Index h = options.height, w = options.width, c = options.channels;
  bool shape_known = h > 0 && w > 0;
  for (std::size_t label = 0; label < class_dirs.size(); ++label) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(class_dirs[label])) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      const std::string bytes = read_file(file);
      RawImage img{h, w, c, bytes};
      if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) {
        img = parse_netpbm(bytes, file.string());
      } else if (!shape_known) {
        throw ValidationError(file.string() + ": headerless image needs --height and --width");
      } else if (static_cast<Index>(bytes.size()) != h * w * c) {
        throw ValidationError(file.string() + ": expected " + std::to_string(h * w * c) + " bytes, found " +
                              std::to_string(bytes.size()));
      }
      if (!shape_known) {
        h = img.h, w = img.w, c = img.c;
        shape_known = true;
      }
      if (img.h != h || img.w != w || img.c != c) {
        throw ValidationError(file.string() + ": image shape differs from earlier images");
      }
      for (char b : img.pixels) pixels.push_back(Scalar(static_cast<unsigned char>(b)) / Scalar(127.5) - Scalar(1));
      labels.push_back(static_cast<Index>(label));
    }
  }
  if (labels.empty()) throw ValidationError("no images found under " + root.string());
  LabeledImageSet out;
  out.num_classes = static_cast<Index>(class_dirs.size());
  out.labels = std::move(labels);
  out.images = Tensor({out.size(), h, w, c},
                      Eigen::Map<const Tensor::Array>(pixels.data(), static_cast<Index>(pixels.size())));
  out.validate();
  return out;
}

}  // namespace lfm
