// Copyright (c) 2026 The cflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "cflow/tape.hpp"

#include "cflow/errors.hpp"

namespace cflow {

const Matrix& Var::value() const { return tape->value(*this); }

Var Tape::constant(Tensor t) { return constant(std::move(t.matrix())); }

Var Tape::constant(Matrix m) {
  Node n;
  n.kind = Kind::constant;
  n.value = std::move(m);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::input(Tensor t) {
  Node n;
  n.kind = Kind::input;
  n.value = std::move(t.matrix());
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::param(const ParamStore& store, ParamId id) {
  Node n;
  n.kind = Kind::param;
  n.value = store.value(id).matrix();
  n.requires_grad = true;
  n.param_id = id;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

const Matrix& Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (n.kind != Kind::input) throw ContractError("grad() is only retained for input() leaves");
  return n.grad;
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, BackwardFn fn) {
  Node n;
  n.kind = Kind::op;
  n.value = std::move(value);
  for (const Var& p : parents) {
    if (p.tape != this) throw ContractError("operands recorded on different tapes");
    n.requires_grad = n.requires_grad || nodes_[p.id].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Matrix& Tape::grad_slot(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var loss, ParamStore& store) { run_backward(loss, &store); }

void Tape::backward(Var loss) { run_backward(loss, nullptr); }

void Tape::run_backward(Var loss, ParamStore* store) {
  if (loss.tape != this) throw ContractError("loss belongs to a different tape");
  const Node& ln = nodes_.at(loss.id);
  if (ln.value.rows() != 1 || ln.value.cols() != 1) {
    throw ContractError("backward() needs a scalar loss, got " + shape_str(ln.value.rows(), ln.value.cols()));
  }
  for (Node& n : nodes_) n.grad.resize(0, 0);
  if (!ln.requires_grad) return;

  grad_slot(loss)(0, 0) = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    switch (n.kind) {
      case Kind::op:
        n.backward(*this, i);
        n.grad.resize(0, 0);
        break;
      case Kind::param:
        if (store == nullptr) throw ContractError("parameter leaf reached but no ParamStore given");
        store->grad(n.param_id).matrix() += n.grad;
        n.grad.resize(0, 0);
        break;
      case Kind::input:
      case Kind::constant:
        break;
    }
  }
}

}  // namespace cflow
