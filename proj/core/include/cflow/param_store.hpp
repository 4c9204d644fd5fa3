// Copyright (c) 2026 The cflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cflow/tensor.hpp"

namespace cflow {

using ParamId = std::size_t;

/// Named trainable tensors in insertion order, each paired with a gradient
/// accumulator of the same shape.
class ParamStore {
 public:
  ParamId add(std::string name, Tensor init);

  std::size_t size() const noexcept { return entries_.size(); }
  const std::string& name(ParamId id) const { return entries_.at(id).name; }
  std::optional<ParamId> find(std::string_view name) const;

  const Tensor& value(ParamId id) const { return entries_.at(id).value; }
  Tensor& value(ParamId id) { return entries_.at(id).value; }
  const Tensor& grad(ParamId id) const { return entries_.at(id).grad; }
  Tensor& grad(ParamId id) { return entries_.at(id).grad; }

  void zero_grad();
  std::size_t scalar_count() const;
  bool grads_finite() const;
  double grad_norm() const;

 private:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor grad;
  };
  std::vector<Entry> entries_;
};

}  // namespace cflow
