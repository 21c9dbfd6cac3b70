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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "lfm/data.hpp"

using namespace lfm;

namespace {

LabeledImageSet balanced(Index per_class, Index classes) {
  BlobOptions o;
  o.num_classes = classes;
  o.per_class = per_class;
  o.height = o.width = 4;
  o.seed = 3;
  return synth_blobs(o).data;
}

Index count_label(const LabeledImageSet& d, Index c) {
  return static_cast<Index>(std::count(d.labels.begin(), d.labels.end(), c));
}

}  // namespace

TEST_CASE("stratified 50/50 split of 100 balanced examples") {
  const LabeledImageSet d = balanced(25, 4);
  const auto [tr, val] = split(d, SplitSpec{});
  CHECK(tr.size() == 50);
  CHECK(val.size() == 50);
  for (Index c = 0; c < 4; ++c) {
    CHECK((count_label(tr, c) == 12 || count_label(tr, c) == 13));
    CHECK((count_label(val, c) == 12 || count_label(val, c) == 13));
  }
}

TEST_CASE("split is a deterministic partition for every seed and fraction") {
  const LabeledImageSet d = balanced(17, 3);
  for (std::uint64_t seed : {0u, 1u, 99u}) {
    for (Scalar f : {Scalar(0.1), Scalar(0.5), Scalar(0.77)}) {
      for (bool strat : {true, false}) {
        const SplitSpec spec{f, seed, strat};
        const SplitIndices s = split_indices(d.labels, d.num_classes, spec);
        std::vector<Index> all = s.first;
        all.insert(all.end(), s.second.begin(), s.second.end());
        std::sort(all.begin(), all.end());
        std::vector<Index> expected(static_cast<std::size_t>(d.size()));
        for (Index i = 0; i < d.size(); ++i) expected[static_cast<std::size_t>(i)] = i;
        CHECK(all == expected);
        CHECK(static_cast<Index>(s.first.size()) == std::llround(double(f) * double(d.size())));
        const SplitIndices again = split_indices(d.labels, d.num_classes, spec);
        CHECK(again.first == s.first);
        CHECK(again.second == s.second);
      }
    }
  }
  const SplitIndices a = split_indices(d.labels, d.num_classes, {0.5, 1, true});
  const SplitIndices b = split_indices(d.labels, d.num_classes, {0.5, 2, true});
  CHECK(a.first != b.first);
}

TEST_CASE("split errors") {
  const LabeledImageSet d = balanced(4, 2);
  CHECK_THROWS_AS(split(d, {Scalar(0), 0, true}), ValidationError);
  CHECK_THROWS_AS(split(d, {Scalar(1), 0, true}), ValidationError);
  LabeledImageSet lonely = d;
  lonely.labels = {0, 0, 0, 0, 0, 0, 0, 1};
  CHECK_THROWS_AS(split(lonely, {}), ValidationError);
  CHECK_NOTHROW(split(lonely, {Scalar(0.5), 0, false}));
}

TEST_CASE("cig view flips roles without copying") {
  const LabeledImageSet d = balanced(5, 3);
  const CigView cig = make_cig_view(d);
  CHECK(cig.size() == d.size());
  BatchSampler a(d.size(), 4, 8), b(cig.size(), 4, 8);
  for (int step = 0; step < 6; ++step) {
    const auto ia = a.next();
    const auto ib = b.next();
    REQUIRE(ia == ib);
    for (Index i : ia) {
      const auto rec = cig[i];
      CHECK(rec.condition == d.labels[static_cast<std::size_t>(i)]);
      CHECK(rec.target.data() == d.image(i).data());
      CHECK(static_cast<Index>(rec.target.size()) == d.image_size());
    }
  }
}

TEST_CASE("batch sampler covers each epoch exactly once") {
  BatchSampler s(10, 4, 1);
  std::multiset<Index> seen;
  for (int i = 0; i < 5; ++i) {
    for (Index k : s.next()) seen.insert(k);
  }
  CHECK(s.epoch() == 1);
  for (Index k = 0; k < 10; ++k) CHECK(seen.count(k) == 2);
}

// ---- synthetic blobs -----------------------------------------------------

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Closed-form nearest-template accuracy for orthogonal templates of norm s
// under N(0, sigma^2) pixel noise: E_z[Phi(z + s / sigma)^(C - 1)].
double nearest_template_accuracy(double s, double sigma, int classes) {
  double acc = 0;
  const double h = 1e-3;
  for (double z = -10; z <= 10; z += h) {
    acc += h * std::exp(-0.5 * z * z) / std::sqrt(2 * M_PI) * std::pow(normal_cdf(z + s / sigma), classes - 1);
  }
  return acc;
}

double accuracy(const std::vector<Index>& pred, const std::vector<Index>& labels) {
  Index hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i];
  return double(hits) / double(pred.size());
}

}  // namespace

TEST_CASE("blobs: values normalized, labels balanced, seed-deterministic") {
  BlobOptions o;
  o.per_class = 20;
  o.seed = 5;
  const BlobSet a = synth_blobs(o);
  CHECK_NOTHROW(a.data.validate());
  CHECK(a.data.images.array().abs().maxCoeff() <= 1);
  for (Index c : a.data.class_counts()) CHECK(c == 20);
  const BlobSet b = synth_blobs(o);
  CHECK(encode_lfmc(a.data) == encode_lfmc(b.data));
  o.seed = 6;
  CHECK(encode_lfmc(synth_blobs(o).data) != encode_lfmc(a.data));
}

TEST_CASE("blobs: templates are equidistant with distance proportional to separation") {
  BlobOptions o;
  o.num_classes = 5;
  o.separation = 3;
  const BlobSet b = synth_blobs(o);
  const Index d = 64;
  const Matrix t = b.templates.matrix(5, d);
  // orthonormal patterns scaled by s: |t_i - t_j|^2 = 2 s^2 (in units of sigma)
  const Scalar expected = Scalar(2 * 9) * b.noise_sigma * b.noise_sigma;
  for (Index i = 0; i < 5; ++i) {
    for (Index j = i + 1; j < 5; ++j) {
      CHECK(std::abs((t.row(i) - t.row(j)).squaredNorm() - expected) <= 1e-9 * expected);
    }
  }
}

TEST_CASE("blobs at separation 0 are indistinguishable") {
  BlobOptions o;
  o.separation = 0;
  o.per_class = 500;
  const BlobSet b = synth_blobs(o);
  const Matrix t = b.templates.matrix(4, 64);
  CHECK((t.rowwise() - t.row(0)).cwiseAbs().maxCoeff() == 0);
  // identical templates: nearest-template ties all go to class 0
  const double acc = accuracy(nearest_template(b.data, b.templates), b.data.labels);
  CHECK(acc == doctest::Approx(0.25).epsilon(1e-9));
}

TEST_CASE("blobs at separation 4 are nearly separable by nearest template") {
  const double closed_form = nearest_template_accuracy(4, 1, 4);
  CHECK(closed_form >= 0.99);
  BlobOptions o;
  o.separation = 4;
  o.per_class = 1000;
  o.seed = 17;
  const BlobSet b = synth_blobs(o);
  const double acc = accuracy(nearest_template(b.data, b.templates), b.data.labels);
  CHECK(acc >= 0.99);
  // empirical accuracy within 4 binomial standard errors of the closed form
  CHECK(std::abs(acc - closed_form) <= 4 * std::sqrt(closed_form * (1 - closed_form) / 4000));
}

TEST_CASE("blob class means converge to their templates") {
  BlobOptions o;
  o.num_classes = 2;
  o.per_class = 10000;
  o.seed = 23;
  const BlobSet b = synth_blobs(o);
  const Index d = b.data.image_size();
  const Scalar n = Scalar(o.per_class);
  for (Index c = 0; c < 2; ++c) {
    Vector mean = Vector::Zero(d);
    for (Index i = 0; i < b.data.size(); ++i) {
      if (b.data.labels[static_cast<std::size_t>(i)] != c) continue;
      for (Index k = 0; k < d; ++k) mean[k] += b.data.image(i)[static_cast<std::size_t>(k)] / n;
    }
    const Vector templ = b.templates.matrix(2, d).row(c).transpose();
    const Scalar rms = (mean - templ).norm() / std::sqrt(Scalar(d));
    CHECK(rms <= 3 * b.noise_sigma / std::sqrt(n));
  }
}

// ---- LFMC container ------------------------------------------------------

TEST_CASE("LFMC golden bytes") {
  LabeledImageSet d;
  d.num_classes = 2;
  d.images = Tensor::from({1, 1, 1, 1}, {0.5});
  d.labels = {1};
  const std::string expected("LFMC\x01\x00\x02\x00\x01\x00\x00\x00\x01\x00\x01\x00\x01\x01\x00\x00\x00\x00\x3f", 23);
  CHECK(encode_lfmc(d) == expected);
  const LabeledImageSet back = decode_lfmc(expected);
  CHECK(back.labels == d.labels);
  CHECK(back.images == d.images);
}

TEST_CASE("LFMC round trip is bit-exact") {
  BlobOptions o;
  o.channels = 3;
  o.height = 4;
  o.width = 6;
  o.per_class = 7;
  const LabeledImageSet d = synth_blobs(o).data;
  const auto path = std::filesystem::temp_directory_path() / "lfm_roundtrip.lfmc";
  save_binary(d, path);
  const LabeledImageSet back = load_binary(path);
  std::filesystem::remove(path);
  CHECK(back.images == d.images);
  CHECK(back.labels == d.labels);
  CHECK(back.num_classes == d.num_classes);
  CHECK(encode_lfmc(back) == encode_lfmc(d));
}

TEST_CASE("LFMC errors carry offsets or validation messages") {
  BlobOptions o;
  o.per_class = 2;
  o.height = o.width = 4;
  const std::string good = encode_lfmc(synth_blobs(o).data);

  std::string bad = good;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_lfmc(bad), ParseError);

  bad = good;
  bad[4] = 9;
  try {
    decode_lfmc(bad);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 4);
  }

  for (std::size_t cut : {std::size_t{3}, std::size_t{10}, good.size() - 1, good.size() - 70}) {
    CAPTURE(cut);
    try {
      decode_lfmc(good.substr(0, cut));
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.offset() == cut);
      CHECK(std::string(e.what()).find("byte offset " + std::to_string(cut)) != std::string::npos);
    }
  }

  bad = good;
  bad[17 + 2 + 16 * 4] = 7;  // label of the second record
  CHECK_THROWS_AS(decode_lfmc(bad), ValidationError);

  CHECK_THROWS_AS(decode_lfmc(good + "x"), ParseError);
}

TEST_CASE("image directory import") {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "lfm_import_test";
  fs::remove_all(root);
  fs::create_directories(root / "a_cats");
  fs::create_directories(root / "b_dogs");
  auto write = [](const fs::path& p, const std::string& bytes) {
    std::ofstream f(p, std::ios::binary);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  };
  write(root / "a_cats" / "0.pgm", std::string("P5\n# c\n2 2\n255\n", 15) + std::string("\x00\xff\x80\x7f", 4));
  write(root / "b_dogs" / "0.raw", std::string("\xff\xff\x00\x00", 4));
  const LabeledImageSet d = import_image_directory(root, {2, 2, 1});
  CHECK(d.num_classes == 2);
  CHECK(d.labels == std::vector<Index>{0, 1});
  CHECK(d.images[0] == doctest::Approx(-1));
  CHECK(d.images[1] == doctest::Approx(1));
  CHECK(d.images[4] == doctest::Approx(1));
  CHECK_THROWS_AS(import_image_directory(root, {3, 3, 1}), ValidationError);
  fs::remove_all(root);
}
