// Copyright (c) 2026 The cflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "cflow/param_store.hpp"

#include <cmath>

#include "cflow/errors.hpp"

namespace cflow {

ParamId ParamStore::add(std::string name, Tensor init) {
  if (find(name)) throw ContractError("duplicate parameter name '" + name + "'");
  Tensor grad(init.rows(), init.cols());
  entries_.push_back({std::move(name), std::move(init), std::move(grad)});
  return entries_.size() - 1;
}

std::optional<ParamId> ParamStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  return std::nullopt;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.grad.matrix().setZero();
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
  return n;
}

bool ParamStore::grads_finite() const {
  for (const auto& e : entries_) {
    if (!e.grad.all_finite()) return false;
  }
  return true;
}

double ParamStore::grad_norm() const {
  double sq = 0.0;
  for (const auto& e : entries_) sq += e.grad.matrix().squaredNorm();
  return std::sqrt(sq);
}

}  // namespace cflow
