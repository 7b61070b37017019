// Copyright 2026 The OCTASeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "octaseg/core/error.hpp"

namespace octaseg {

/// Shape of a dense array, rank <= 4. Feature maps are (B, C, H, W),
/// sequences (B, L, C), weights whatever their operator needs.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<long> dims) : rank_(static_cast<int>(dims.size())) {
    require(rank_ <= 4, ErrorCode::Internal, "Shape rank > 4");
    int i = 0;
    for (long d : dims) dims_[i++] = d;
  }

  int rank() const { return rank_; }
  long operator[](int i) const { return dims_[i]; }
  long& operator[](int i) { return dims_[i]; }

  long numel() const {
    long n = 1;
    for (int i = 0; i < rank_; ++i) n *= dims_[i];
    return n;
  }

  bool operator==(const Shape& o) const {
    if (rank_ != o.rank_) return false;
    for (int i = 0; i < rank_; ++i)
      if (dims_[i] != o.dims_[i]) return false;
    return true;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    std::string s = "(";
    for (int i = 0; i < rank_; ++i) s += std::to_string(dims_[i]) + (i + 1 < rank_ ? "," : "");
    return s + ")";
  }

 private:
  long dims_[4] = {0, 0, 0, 0};
  int rank_ = 0;
};

/// Dense row-major array of scalars with value semantics.
template <typename T>
class Tensor {
 public:
  using ArrayMap = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
  using ConstArrayMap = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;
  using MatrixMap =
      Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstMatrixMap =
      Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(shape), data_(static_cast<size_t>(shape.numel()), T(0)) {}
  Tensor(Shape shape, T fill)
      : shape_(shape), data_(static_cast<size_t>(shape.numel()), fill) {}
  Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    require(static_cast<long>(data_.size()) == shape_.numel(), ErrorCode::ShapeMismatch,
            "Tensor data size does not match shape " + shape_.str());
  }

  static Tensor zeros(Shape s) { return Tensor(s); }
  static Tensor ones(Shape s) { return Tensor(s, T(1)); }
  static Tensor full(Shape s, T v) { return Tensor(s, v); }
  static Tensor scalar(T v) { return Tensor(Shape{1}, v); }

  const Shape& shape() const { return shape_; }
  int rank() const { return shape_.rank(); }
  long dim(int i) const { return shape_[i]; }
  long numel() const { return static_cast<long>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](long i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](long i) const { return data_[static_cast<size_t>(i)]; }

  // 4-d accessor for (B,C,H,W) maps.
  T& at(long b, long c, long h, long w) {
    return data_[static_cast<size_t>(((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  const T& at(long b, long c, long h, long w) const {
    return data_[static_cast<size_t>(((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  // 3-d accessor for (B,L,C) sequences.
  T& at3(long b, long l, long c) {
    return data_[static_cast<size_t>((b * shape_[1] + l) * shape_[2] + c)];
  }
  const T& at3(long b, long l, long c) const {
    return data_[static_cast<size_t>((b * shape_[1] + l) * shape_[2] + c)];
  }
  T& at2(long r, long c) { return data_[static_cast<size_t>(r * shape_[1] + c)]; }
  const T& at2(long r, long c) const { return data_[static_cast<size_t>(r * shape_[1] + c)]; }

  ArrayMap flat() { return ArrayMap(data_.data(), numel()); }
  ConstArrayMap flat() const { return ConstArrayMap(data_.data(), numel()); }

  // View the last `cols` stride as matrix columns; rows = numel/cols.
  MatrixMap as_matrix(long rows, long cols) {
    require(rows * cols == numel(), ErrorCode::ShapeMismatch, "as_matrix size mismatch");
    return MatrixMap(data_.data(), rows, cols);
  }
  ConstMatrixMap as_matrix(long rows, long cols) const {
    require(rows * cols == numel(), ErrorCode::ShapeMismatch, "as_matrix size mismatch");
    return ConstMatrixMap(data_.data(), rows, cols);
  }

  Tensor reshaped(Shape s) const {
    require(s.numel() == numel(), ErrorCode::ShapeMismatch,
            "reshape " + shape_.str() + " -> " + s.str());
    Tensor t = *this;
    t.shape_ = s;
    return t;
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void set_zero() { fill(T(0)); }

  bool all_finite() const {
    for (const T& v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  T sum() const { return flat().sum(); }
  T max_abs() const { return numel() ? flat().abs().maxCoeff() : T(0); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (long i = 0; i < numel(); ++i) out[i] = static_cast<U>(data_[static_cast<size_t>(i)]);
    return out;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(), ErrorCode::ShapeMismatch,
          "max_abs_diff " + a.shape().str() + " vs " + b.shape().str());
  double m = 0;
  for (long i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

/// FNV-1a over the raw bytes; used for determinism fingerprints.
inline std::uint64_t fnv1a(const void* p, size_t n, std::uint64_t h = 1469598103934665603ull) {
  const auto* b = static_cast<const unsigned char*>(p);
  for (size_t i = 0; i < n; ++i) {
    h ^= b[i];
    h *= 1099511628211ull;
  }
  return h;
}

template <typename T>
std::uint64_t hash_tensor(const Tensor<T>& t, std::uint64_t h = 1469598103934665603ull) {
  return fnv1a(t.data(), sizeof(T) * static_cast<size_t>(t.numel()), h);
}

}  // namespace octaseg
