// dsq/tensor.hpp

// Copyright 2026  The dsq Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef DSQ_TENSOR_HPP_
#define DSQ_TENSOR_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsq {

using Shape = std::vector<std::size_t>;

/// Thrown when operand shapes do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a forward value becomes NaN/Inf or a gradient check fails hard.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::size_t ShapeSize(const Shape &shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string ShapeString(const Shape &shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

/// Dense row-major tensor. Sequences are stored one position per row, so a
/// d-dimensional sequence of length N is an N x d matrix.
template <typename T>
struct Tensor {
  using value_type = T;

  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0))
      : shape(std::move(s)), data(ShapeSize(shape), fill) {}
  Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
    if (ShapeSize(shape) != data.size())
      throw DimensionError("tensor data size " + std::to_string(data.size()) +
                           " does not match shape " + ShapeString(shape));
  }

  static Tensor Matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<T> values) {
    return Tensor({rows, cols}, std::vector<T>(values));
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  bool empty() const { return data.empty(); }

  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.size() > 1 ? shape[1] : 1; }

  T &operator()(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
  const T &operator()(std::size_t r, std::size_t c) const {
    return data[r * shape[1] + c];
  }
  T &operator[](std::size_t i) { return data[i]; }
  const T &operator[](std::size_t i) const { return data[i]; }

  std::span<T> row(std::size_t r) { return {data.data() + r * cols(), cols()}; }
  std::span<const T> row(std::size_t r) const {
    return {data.data() + r * cols(), cols()};
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  bool all_finite() const {
    return std::all_of(data.begin(), data.end(),
                       [](T v) { return std::isfinite(v); });
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    return out;
  }

  friend bool operator==(const Tensor &a, const Tensor &b) {
    return a.shape == b.shape && a.data == b.data;
  }
};

template <typename T>
T MaxAbsDiff(const Tensor<T> &a, const Tensor<T> &b) {
  if (a.shape != b.shape)
    throw DimensionError("MaxAbsDiff: " + ShapeString(a.shape) + " vs " +
                         ShapeString(b.shape));
  T m = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, static_cast<T>(std::abs(a[i] - b[i])));
  return m;
}

/// Stacks 1 x d rows into an N x d matrix.
template <typename T>
Tensor<T> StackRows(std::span<const Tensor<T>> rows) {
  if (rows.empty()) throw DimensionError("StackRows: no rows");
  const std::size_t d = rows.front().size();
  Tensor<T> out({rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != d) throw DimensionError("StackRows: ragged rows");
    std::copy(rows[i].data.begin(), rows[i].data.end(), out.data.begin() + i * d);
  }
  return out;
}

template <typename T>
Tensor<T> RowOf(const Tensor<T> &m, std::size_t r) {
  auto s = m.row(r);
  return Tensor<T>({1, m.cols()}, std::vector<T>(s.begin(), s.end()));
}

}  // namespace dsq

#endif  // DSQ_TENSOR_HPP_
