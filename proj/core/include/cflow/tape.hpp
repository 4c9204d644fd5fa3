// Copyright (c) 2026 The cflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <vector>

#include "cflow/param_store.hpp"
#include "cflow/tensor.hpp"

namespace cflow {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
/// tape that produced it is alive.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

/// Define-by-run record of a computation. Nodes are appended in evaluation
/// order, so every node's parents precede it and backward is a single
/// reverse sweep.
///
/// backward() releases intermediate gradient buffers as soon as they have
/// been propagated; values stay alive until the tape is destroyed. Build a
/// fresh tape per minibatch.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Tensor t);
  Var constant(Matrix m);
  /// Leaf whose gradient is kept after backward (see grad()).
  Var input(Tensor t);
  /// Leaf bound to a parameter; backward adds into the store's accumulator.
  Var param(const ParamStore& store, ParamId id);

  const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
  Tensor tensor(Var v) const { return Tensor(nodes_.at(v.id).value); }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  /// Gradient of the last backward() loss w.r.t. an input() leaf.
  const Matrix& grad(Var v) const;

  /// Accumulates dLoss/dParam into `store` for every parameter leaf reachable
  /// from `loss`. `loss` must be 1×1.
  void backward(Var loss, ParamStore& store);
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

  // Op-author interface.
  Var record(Matrix value, std::initializer_list<Var> parents, BackwardFn fn);
  /// Incoming gradient of node `id` during backward.
  const Matrix& upstream(std::size_t id) const { return nodes_[id].grad; }
  /// Gradient slot of `v`, zero-initialised on first touch. Only call for
  /// vars with requires_grad.
  Matrix& grad_slot(Var v);

 private:
  enum class Kind { constant, input, param, op };
  struct Node {
    Kind kind = Kind::constant;
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    ParamId param_id = 0;
    BackwardFn backward;
  };

  void run_backward(Var loss, ParamStore* store);

  std::vector<Node> nodes_;
};

}  // namespace cflow
