// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tunnelwave Authors
#pragma once

#include <tunnelwave/error.hpp>

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace tunnelwave::tc {

/// Dense row-major array of doubles. Rank-4 tensors are (batch, channels,
/// height, width); lower ranks are allowed for parameters and scalars.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape, double fill = 0.0) : shape_(std::move(shape)) {
    check_shape();
    data_.assign(count(shape_), fill);
  }

  Tensor(std::vector<int> shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape();
    if (data_.size() != count(shape_)) {
      throw InvalidArgument("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                            shape_string());
    }
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int k) const { return shape_.at(static_cast<std::size_t>(k)); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t k) { return data_[k]; }
  double operator[](std::size_t k) const { return data_[k]; }

  // rank-4 accessors
  int batch() const { return dim(0); }
  int channels() const { return dim(1); }
  int height() const { return dim(2); }
  int width() const { return dim(3); }
  std::size_t plane() const { return static_cast<std::size_t>(height()) * width(); }
  double& at(int b, int c, int y, int x) { return data_[index(b, c, y, x)]; }
  double at(int b, int c, int y, int x) const { return data_[index(b, c, y, x)]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  std::string shape_string() const {
    std::string s = "(";
    for (std::size_t k = 0; k < shape_.size(); ++k) s += (k ? ", " : "") + std::to_string(shape_[k]);
    return s + ")";
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  static std::size_t count(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
  }

 private:
  std::size_t index(int b, int c, int y, int x) const {
    return ((static_cast<std::size_t>(b) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x;
  }
  void check_shape() const {
    if (shape_.empty()) throw InvalidArgument("tensor shape must have rank >= 1");
    for (int d : shape_)
      if (d < 1) throw InvalidArgument("tensor dimensions must be positive, got " + shape_string());
  }

  std::vector<int> shape_;
  std::vector<double> data_;
};

inline void require_rank4(const Tensor& t, const char* what) {
  if (t.rank() != 4) throw InvalidArgument(std::string(what) + ": expected a 4-D tensor, got " + t.shape_string());
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw InvalidArgument(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
}

inline double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  return std::inner_product(a.values().begin(), a.values().end(), b.values().begin(), 0.0);
}

}  // namespace tunnelwave::tc
