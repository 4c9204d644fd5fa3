// Copyright (c) 2026 The cflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "cflow/tensor.hpp"

#include "cflow/errors.hpp"

namespace cflow {

Tensor::Tensor(Eigen::Index rows, Eigen::Index cols, std::span<const double> data) : m_(rows, cols) {
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                         cflow::shape_str(rows, cols));
  }
  std::copy(data.begin(), data.end(), m_.data());
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto m = n == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(rows.begin()->size());
  Matrix out(n, m);
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    if (static_cast<Eigen::Index>(row.size()) != m) throw DimensionError("ragged row list");
    Eigen::Index c = 0;
    for (double v : row) out(r, c++) = v;
    ++r;
  }
  return Tensor(std::move(out));
}

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) throw DimensionError("item() on tensor of shape " + shape_str());
  return m_(0, 0);
}

std::string Tensor::shape_str() const { return cflow::shape_str(rows(), cols()); }

std::string shape_str(Eigen::Index rows, Eigen::Index cols) {
  return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

}  // namespace cflow
