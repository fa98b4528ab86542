// SPDX-License-Identifier: Apache-2.0
#include "hybridnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hybridnet/error.hpp"

namespace hybridnet {

namespace {

void check_extents(const std::vector<std::size_t>& extents) {
  for (auto e : extents) {
    if (e == 0) throw ShapeError("shape extents must be positive");
  }
}

}  // namespace

Shape::Shape(std::initializer_list<std::size_t> extents) : extents_(extents) {
  check_extents(extents_);
}

Shape::Shape(std::vector<std::size_t> extents) : extents_(std::move(extents)) {
  check_extents(extents_);
}

std::size_t Shape::numel() const {
  if (extents_.empty()) return 0;
  std::size_t n = 1;
  for (auto e : extents_) n *= e;
  return n;
}

Shape Shape::prepend(std::size_t lead) const {
  std::vector<std::size_t> e;
  e.reserve(extents_.size() + 1);
  e.push_back(lead);
  e.insert(e.end(), extents_.begin(), extents_.end());
  return Shape(std::move(e));
}

Shape Shape::drop_front() const {
  if (extents_.empty()) throw ShapeError("cannot drop the leading axis of an empty shape");
  return Shape(std::vector<std::size_t>(extents_.begin() + 1, extents_.end()));
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < extents_.size(); ++i) {
    if (i) os << 'x';
    os << extents_[i];
  }
  os << ']';
  return os.str();
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
  }
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_.numel(), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_.str());
  }
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) && {
  if (shape.numel() != data_.size()) {
    throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
  }
  shape_ = std::move(shape);
  return std::move(*this);
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
Tensor<T>& Tensor<T>::operator+=(const Tensor& other) {
  require_same_shape(shape_, other.shape_, "add");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

template <typename T>
Tensor<T>& Tensor<T>::operator-=(const Tensor& other) {
  require_same_shape(shape_, other.shape_, "subtract");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

template <typename T>
Tensor<T>& Tensor<T>::operator*=(T scale) {
  for (auto& v : data_) v *= scale;
  return *this;
}

template <typename T>
Tensor<T> Tensor<T>::slice_rows(std::size_t begin, std::size_t end) const {
  if (rank() == 0 || begin >= end || end > shape_[0]) {
    throw ShapeError("row slice [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of range for " +
                     shape_.str());
  }
  const std::size_t row = data_.size() / shape_[0];
  std::vector<std::size_t> e = shape_.extents();
  e[0] = end - begin;
  return Tensor(Shape(std::move(e)),
                std::vector<T>(data_.begin() + static_cast<std::ptrdiff_t>(begin * row),
                               data_.begin() + static_cast<std::ptrdiff_t>(end * row)));
}

template <typename T>
void Tensor<T>::assign_rows(std::size_t begin, const Tensor& src) {
  if (rank() == 0 || src.rank() != rank() || begin + src.dim(0) > shape_[0] ||
      src.shape_.drop_front() != shape_.drop_front()) {
    throw ShapeError("cannot assign rows " + src.shape_.str() + " at " + std::to_string(begin) + " into " +
                     shape_.str());
  }
  const std::size_t row = data_.size() / shape_[0];
  std::copy(src.data_.begin(), src.data_.end(), data_.begin() + static_cast<std::ptrdiff_t>(begin * row));
}

template <typename T>
Tensor<T> Tensor<T>::slice_cols(std::size_t begin, std::size_t end) const {
  if (rank() != 2 || begin >= end || end > shape_[1]) {
    throw ShapeError("column slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of range for " + shape_.str());
  }
  const std::size_t rows = shape_[0];
  const std::size_t width = end - begin;
  Tensor out(Shape{rows, width});
  for (std::size_t i = 0; i < rows; ++i) {
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(i * shape_[1] + begin), width,
                out.data_.begin() + static_cast<std::ptrdiff_t>(i * width));
  }
  return out;
}

template <typename T>
void Tensor<T>::assign_cols(std::size_t begin, const Tensor& src) {
  if (rank() != 2 || src.rank() != 2 || src.dim(0) != shape_[0] || begin + src.dim(1) > shape_[1]) {
    throw ShapeError("cannot assign columns " + src.shape_.str() + " at " + std::to_string(begin) + " into " +
                     shape_.str());
  }
  const std::size_t width = src.dim(1);
  for (std::size_t i = 0; i < shape_[0]; ++i) {
    std::copy_n(src.data_.begin() + static_cast<std::ptrdiff_t>(i * width), width,
                data_.begin() + static_cast<std::ptrdiff_t>(i * shape_[1] + begin));
  }
}

template <typename T>
double max_relative_error(const Tensor<T>& actual, const Tensor<T>& expected) {
  require_same_shape(actual.shape(), expected.shape(), "max_relative_error");
  double diff = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    diff = std::max(diff, std::abs(static_cast<double>(actual[i]) - static_cast<double>(expected[i])));
    scale = std::max(scale, std::abs(static_cast<double>(expected[i])));
  }
  if (diff == 0.0) return 0.0;
  return diff / std::max(scale, 1e-300);
}

template class Tensor<float>;
template class Tensor<double>;
template double max_relative_error(const Tensor<float>&, const Tensor<float>&);
template double max_relative_error(const Tensor<double>&, const Tensor<double>&);

}  // namespace hybridnet
