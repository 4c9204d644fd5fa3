// Copyright (c) 2026 The cflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace cflow {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense rank-2 array of doubles, row-major. A row vector is 1×n, a scalar
/// is 1×1. Tensors are plain values: copying copies the buffer.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Eigen::Index rows, Eigen::Index cols) : m_(Matrix::Zero(rows, cols)) {}
  Tensor(Eigen::Index rows, Eigen::Index cols, std::span<const double> data);
  explicit Tensor(Matrix m) : m_(std::move(m)) {}

  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor scalar(double v) { return Tensor(Matrix::Constant(1, 1, v)); }
  static Tensor filled(Eigen::Index rows, Eigen::Index cols, double v) {
    return Tensor(Matrix::Constant(rows, cols, v));
  }

  Eigen::Index rows() const noexcept { return m_.rows(); }
  Eigen::Index cols() const noexcept { return m_.cols(); }
  Eigen::Index size() const noexcept { return m_.size(); }
  bool empty() const noexcept { return m_.size() == 0; }

  double operator()(Eigen::Index r, Eigen::Index c) const { return m_(r, c); }
  double& operator()(Eigen::Index r, Eigen::Index c) { return m_(r, c); }

  /// Value of a 1×1 tensor.
  double item() const;

  std::span<const double> values() const noexcept {
    return {m_.data(), static_cast<std::size_t>(m_.size())};
  }
  std::span<double> values() noexcept { return {m_.data(), static_cast<std::size_t>(m_.size())}; }

  const Matrix& matrix() const noexcept { return m_; }
  Matrix& matrix() noexcept { return m_; }

  bool all_finite() const { return m_.allFinite(); }
  std::string shape_str() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a.m_ == b.m_;
  }

 private:
  Matrix m_;
};

std::string shape_str(Eigen::Index rows, Eigen::Index cols);

}  // namespace cflow
