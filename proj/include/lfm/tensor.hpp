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

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "lfm/error.hpp"

namespace lfm {

#ifdef LFM_SINGLE_PRECISION
using Scalar = float;
#else
using Scalar = double;
#endif

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename T>
using VectorX = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using MatrixX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using RowMatrixX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Vector = VectorX<Scalar>;
using Matrix = MatrixX<Scalar>;

inline Index num_elements(const Shape& shape) {
  Index n = 1;
  for (Index e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape);

// Dense row-major tensor. Storage is a flat Eigen array so element-wise math
// stays expression-friendly.
template <typename T>
class BasicTensor {
 public:
  using Array = Eigen::Array<T, Eigen::Dynamic, 1>;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape) : shape_(std::move(shape)), data_(Array::Zero(num_elements(shape_))) {}
  BasicTensor(Shape shape, Array data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != num_elements(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_string(shape_));
    }
  }

  static BasicTensor zeros(Shape shape) { return BasicTensor(std::move(shape)); }
  static BasicTensor constant(Shape shape, T value) {
    const Index n = num_elements(shape);
    return BasicTensor(std::move(shape), Array::Constant(n, value));
  }
  static BasicTensor scalar(T value) { return BasicTensor(Shape{}, Array::Constant(1, value)); }
  static BasicTensor from(Shape shape, std::initializer_list<T> values) {
    Array a(static_cast<Index>(values.size()));
    Index i = 0;
    for (T v : values) a[i++] = v;
    return BasicTensor(std::move(shape), std::move(a));
  }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  Index size() const { return data_.size(); }

  Array& array() { return data_; }
  const Array& array() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return {data_.data(), static_cast<std::size_t>(data_.size())}; }
  std::span<const T> values() const { return {data_.data(), static_cast<std::size_t>(data_.size())}; }

  T& operator[](Index i) { return data_[i]; }
  T operator[](Index i) const { return data_[i]; }
  T item() const {
    if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape_));
    return data_[0];
  }

  // Views the tensor as a row-major [rows x cols] matrix.
  Eigen::Map<RowMatrixX<T>> matrix(Index rows, Index cols) {
    return Eigen::Map<RowMatrixX<T>>(data_.data(), rows, cols);
  }
  Eigen::Map<const RowMatrixX<T>> matrix(Index rows, Index cols) const {
    return Eigen::Map<const RowMatrixX<T>>(data_.data(), rows, cols);
  }

  BasicTensor reshaped(Shape shape) const {
    if (num_elements(shape) != size()) {
      throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return BasicTensor(std::move(shape), data_);
  }

  bool all_finite() const { return data_.isFinite().all(); }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && (a.data_ == b.data_).all();
  }

 private:
  Shape shape_;
  Array data_;
};

using Tensor = BasicTensor<Scalar>;

}  // namespace lfm
