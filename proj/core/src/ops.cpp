// Copyright (c) 2026 The cflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "cflow/ops.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "cflow/errors.hpp"

namespace cflow {
namespace {

void require_same_shape(const char* op, Var a, Var b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.rows(), a.cols()) + " vs " +
                         shape_str(b.rows(), b.cols()));
  }
}

/// Unary elementwise op whose derivative is expressed through the input x
/// and output y.
template <typename Fwd, typename Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
  Tape& t = *a.tape;
  Matrix y = fwd(a.value().array()).matrix();
  return t.record(std::move(y), {a}, [a, deriv](Tape& tape, std::size_t self) {
    const Var out{&tape, self};
    tape.grad_slot(a).array() += tape.upstream(self).array() * deriv(a.value().array(), out.value().array());
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.rows(), a.cols()) + " x " +
                         shape_str(b.rows(), b.cols()));
  }
  Matrix c = a.value() * b.value();
  return a.tape->record(std::move(c), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.upstream(self);
    if (t.requires_grad(a)) t.grad_slot(a).noalias() += g * b.value().transpose();
    if (t.requires_grad(b)) t.grad_slot(b).noalias() += a.value().transpose() * g;
  });
}

Var add_bias(Var x, Var b) {
  if (b.rows() != 1 || b.cols() != x.cols()) {
    throw DimensionError("add_bias: bias " + shape_str(b.rows(), b.cols()) + " does not fit " +
                         shape_str(x.rows(), x.cols()));
  }
  Matrix y = x.value().rowwise() + b.value().row(0);
  return x.tape->record(std::move(y), {x, b}, [x, b](Tape& t, std::size_t self) {
    const Matrix& g = t.upstream(self);
    if (t.requires_grad(x)) t.grad_slot(x) += g;
    if (t.requires_grad(b)) t.grad_slot(b) += g.colwise().sum();
  });
}

Var dense(Var x, Var w, Var b, Activation act) {
  if (x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols()) {
    throw DimensionError("dense: input " + shape_str(x.rows(), x.cols()) + ", weight " +
                         shape_str(w.rows(), w.cols()) + ", bias " + shape_str(b.rows(), b.cols()));
  }
  Matrix y(x.rows(), w.cols());
  y.noalias() = x.value() * w.value();
  const auto bias = b.value().row(0).array();
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    auto row = y.row(r).array();
    switch (act) {
      case Activation::relu: row = (row + bias).max(0.0); break;
      case Activation::tanh: row = (row + bias).tanh(); break;
      case Activation::none: row += bias; break;
    }
  }
  return x.tape->record(std::move(y), {x, w, b}, [x, w, b, act](Tape& t, std::size_t self) {
    const Matrix& y = t.value(Var{&t, self});
    Matrix& g = t.grad_slot(Var{&t, self});
    switch (act) {
      case Activation::relu: g = (y.array() > 0.0).select(g, 0.0); break;
      case Activation::tanh: g.array() *= 1.0 - y.array().square(); break;
      case Activation::none: break;
    }
    if (t.requires_grad(x)) t.grad_slot(x).noalias() += g * w.value().transpose();
    if (t.requires_grad(w)) t.grad_slot(w).noalias() += x.value().transpose() * g;
    if (t.requires_grad(b)) t.grad_slot(b) += g.colwise().sum();
  });
}

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  return a.tape->record(a.value() + b.value(), {a, b}, [a, b](Tape& t, std::size_t self) {
    if (t.requires_grad(a)) t.grad_slot(a) += t.upstream(self);
    if (t.requires_grad(b)) t.grad_slot(b) += t.upstream(self);
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  return a.tape->record(a.value() - b.value(), {a, b}, [a, b](Tape& t, std::size_t self) {
    if (t.requires_grad(a)) t.grad_slot(a) += t.upstream(self);
    if (t.requires_grad(b)) t.grad_slot(b) -= t.upstream(self);
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  Matrix y = a.value().cwiseProduct(b.value());
  return a.tape->record(std::move(y), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.upstream(self);
    if (t.requires_grad(a)) t.grad_slot(a) += g.cwiseProduct(b.value());
    if (t.requires_grad(b)) t.grad_slot(b) += g.cwiseProduct(a.value());
  });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double c) {
  return a.tape->record(a.value() * c, {a}, [a, c](Tape& t, std::size_t self) {
    t.grad_slot(a) += t.upstream(self) * c;
  });
}

Var add_scalar(Var a, double c) {
  Matrix y = (a.value().array() + c).matrix();
  return a.tape->record(std::move(y), {a}, [a](Tape& t, std::size_t self) { t.grad_slot(a) += t.upstream(self); });
}

Var exp(Var a) {
  return unary(a, [](const auto& x) { return x.exp(); }, [](const auto&, const auto& y) { return y; });
}

Var log(Var a) {
  if ((a.value().array() <= 0.0).any()) throw DomainError("log: input has non-positive entries");
  return unary(a, [](const auto& x) { return x.log(); }, [](const auto& x, const auto&) { return x.inverse(); });
}

Var tanh(Var a) {
  return unary(a, [](const auto& x) { return x.tanh(); }, [](const auto&, const auto& y) { return 1.0 - y.square(); });
}

Var relu(Var a) {
  return unary(
      a, [](const auto& x) { return x.max(0.0); },
      [](const auto& x, const auto&) { return (x > 0.0).template cast<double>(); });
}

Var square(Var a) {
  return unary(a, [](const auto& x) { return x.square(); }, [](const auto& x, const auto&) { return 2.0 * x; });
}

Var sqrt(Var a) {
  if ((a.value().array() < 0.0).any()) throw DomainError("sqrt: input has negative entries");
  return unary(a, [](const auto& x) { return x.sqrt(); }, [](const auto&, const auto& y) { return 0.5 / y; });
}

Var reciprocal(Var a) {
  return unary(a, [](const auto& x) { return x.inverse(); }, [](const auto&, const auto& y) { return -y.square(); });
}

Var concat(Var a, Var b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("concat: row counts differ, " + shape_str(a.rows(), a.cols()) + " vs " +
                         shape_str(b.rows(), b.cols()));
  }
  const Eigen::Index p = a.cols();
  const Eigen::Index q = b.cols();
  Matrix y(a.rows(), p + q);
  y.leftCols(p) = a.value();
  y.rightCols(q) = b.value();
  return a.tape->record(std::move(y), {a, b}, [a, b, p, q](Tape& t, std::size_t self) {
    const Matrix& g = t.upstream(self);
    if (t.requires_grad(a)) t.grad_slot(a) += g.leftCols(p);
    if (t.requires_grad(b)) t.grad_slot(b) += g.rightCols(q);
  });
}

Var slice_cols(Var t, Eigen::Index begin, Eigen::Index end) {
  if (begin < 0 || end > t.cols() || begin > end) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") outside " + shape_str(t.rows(), t.cols()));
  }
  Matrix y = t.value().middleCols(begin, end - begin);
  return t.tape->record(std::move(y), {t}, [t, begin, end](Tape& tape, std::size_t self) {
    tape.grad_slot(t).middleCols(begin, end - begin) += tape.upstream(self);
  });
}

std::pair<Var, Var> split(Var t, Eigen::Index at) {
  if (at <= 0 || at >= t.cols()) {
    throw DimensionError("split: index " + std::to_string(at) + " does not split " + shape_str(t.rows(), t.cols()));
  }
  return {slice_cols(t, 0, at), slice_cols(t, at, t.cols())};
}

Var permute_cols(Var t, std::span<const int> perm) {
  if (static_cast<Eigen::Index>(perm.size()) != t.cols()) {
    throw DimensionError("permute_cols: permutation of length " + std::to_string(perm.size()) + " for " +
                         shape_str(t.rows(), t.cols()));
  }
  std::vector<int> p(perm.begin(), perm.end());
  Matrix y(t.rows(), t.cols());
  for (Eigen::Index j = 0; j < t.cols(); ++j) y.col(j) = t.value().col(p[j]);
  return t.tape->record(std::move(y), {t}, [t, p = std::move(p)](Tape& tape, std::size_t self) {
    const Matrix& g = tape.upstream(self);
    Matrix& gt = tape.grad_slot(t);
    for (std::size_t j = 0; j < p.size(); ++j) gt.col(p[j]) += g.col(static_cast<Eigen::Index>(j));
  });
}

Var sum(Var t) {
  return t.tape->record(Matrix::Constant(1, 1, t.value().sum()), {t}, [t](Tape& tape, std::size_t self) {
    tape.grad_slot(t).array() += tape.upstream(self)(0, 0);
  });
}

Var mean(Var t) {
  const auto n = static_cast<double>(t.value().size());
  const double m = t.value().size() == 0 ? 0.0 : t.value().sum() / n;
  return t.tape->record(Matrix::Constant(1, 1, m), {t}, [t, n](Tape& tape, std::size_t self) {
    tape.grad_slot(t).array() += tape.upstream(self)(0, 0) / n;
  });
}

Var sum_rows(Var t) {
  Matrix y = t.value().rowwise().sum();
  return t.tape->record(std::move(y), {t}, [t](Tape& tape, std::size_t self) {
    tape.grad_slot(t).colwise() += tape.upstream(self).col(0);
  });
}

Var pairwise_sq_dist(Var a, Var b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("pairwise_sq_dist: widths differ, " + shape_str(a.rows(), a.cols()) + " vs " +
                         shape_str(b.rows(), b.cols()));
  }
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  Matrix d(av.rows(), bv.rows());
  for (Eigen::Index i = 0; i < av.rows(); ++i) {
    d.row(i) = (bv.rowwise() - av.row(i)).rowwise().squaredNorm().transpose();
  }
  return a.tape->record(std::move(d), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.upstream(self);
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    if (t.requires_grad(a)) {
      Matrix& ga = t.grad_slot(a);
      ga += 2.0 * (g.rowwise().sum().asDiagonal() * av);
      ga.noalias() -= 2.0 * g * bv;
    }
    if (t.requires_grad(b)) {
      Matrix& gb = t.grad_slot(b);
      gb += 2.0 * (g.colwise().sum().transpose().asDiagonal() * bv);
      gb.noalias() -= 2.0 * g.transpose() * av;
    }
  });
}

}  // namespace cflow
