// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace hybridnet {

/// Ordered list of positive extents. 4-D activations use (batch, channels,
/// height, width).
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> extents);
  explicit Shape(std::vector<std::size_t> extents);

  std::size_t rank() const { return extents_.size(); }
  std::size_t operator[](std::size_t axis) const { return extents_[axis]; }
  std::size_t numel() const;
  const std::vector<std::size_t>& extents() const { return extents_; }

  /// Shape with `lead` prepended, e.g. a per-example shape with a batch axis.
  Shape prepend(std::size_t lead) const;
  /// Shape without its leading axis.
  Shape drop_front() const;

  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  std::vector<std::size_t> extents_;
};

/// Dense row-major array. Arithmetic helpers never broadcast; every binary
/// operation requires identical shapes.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rank() const { return shape_.rank(); }
  std::size_t dim(std::size_t axis) const { return shape_[axis]; }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// 2-D and 4-D element access.
  T& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  const T& at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  /// Same data, new extents. Throws ShapeError when the element counts differ.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  void fill(T value);

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(T scale);

  /// Rows [begin, end) along axis 0.
  Tensor slice_rows(std::size_t begin, std::size_t end) const;
  /// Overwrites rows [begin, begin + src.dim(0)) along axis 0.
  void assign_rows(std::size_t begin, const Tensor& src);
  /// Columns [begin, end) of a 2-D tensor.
  Tensor slice_cols(std::size_t begin, std::size_t end) const;
  /// Overwrites columns [begin, begin + src.dim(1)) of a 2-D tensor.
  void assign_cols(std::size_t begin, const Tensor& src);

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

/// Throws ShapeError naming `what` and both shapes unless they are equal.
void require_same_shape(const Shape& a, const Shape& b, const char* what);

/// max|a-b| / max(max|b|, tiny); 0 when both are all-zero.
template <typename T>
double max_relative_error(const Tensor<T>& actual, const Tensor<T>& expected);

}  // namespace hybridnet
