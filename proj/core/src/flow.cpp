// Copyright (c) 2026 The cflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "cflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "cflow/errors.hpp"

namespace cflow {

void DimPlan::validate() const {
  if (x_dim < 0 || pad < 0 || cond_dim < 1 || dummy_dim < 1) {
    throw DimensionError("dim plan needs x_dim, pad >= 0 and cond_dim, dummy_dim >= 1");
  }
  if (x_dim + pad != cond_dim + dummy_dim) {
    throw DimensionError("dim plan does not conserve width: x_dim + pad = " + std::to_string(x_dim + pad) +
                         " but cond_dim + dummy_dim = " + std::to_string(cond_dim + dummy_dim));
  }
}

namespace {

Tensor glorot(Rng& rng, int fan_in, int fan_out, double gain) {
  const double limit = gain * std::sqrt(6.0 / (fan_in + fan_out));
  return rng.uniform(fan_in, fan_out, -limit, limit);
}

}  // namespace

// --- Mlp --------------------------------------------------------------------

Mlp::Mlp(ParamStore& store, const std::string& prefix, int in, int hidden, int out, Rng& rng) : in_(in), out_(out) {
  const int widths[4] = {in, hidden, hidden, out};
  for (int l = 0; l < 3; ++l) {
    const std::string layer = prefix + ".l" + std::to_string(l);
    Tensor w = l < 2 ? glorot(rng, widths[l], widths[l + 1], 1.0) : Tensor(widths[l], widths[l + 1]);
    w_[l] = store.add(layer + ".w", std::move(w));
    b_[l] = store.add(layer + ".b", Tensor(1, widths[l + 1]));
  }
}

Var Mlp::apply(Tape& tape, const ParamStore& store, Var x) const {
  Var h = x;
  for (int l = 0; l < 3; ++l) {
    h = dense(h, tape.param(store, w_[l]), tape.param(store, b_[l]), l < 2 ? Activation::relu : Activation::none);
  }
  return h;
}

void Mlp::randomize(ParamStore& store, Rng& rng, double output_gain) const {
  for (int l = 0; l < 3; ++l) {
    Tensor& w = store.value(w_[l]);
    const double gain = l < 2 ? 1.0 : output_gain;
    w = glorot(rng, static_cast<int>(w.rows()), static_cast<int>(w.cols()), gain);
    Tensor& b = store.value(b_[l]);
    b = rng.uniform(1, b.cols(), -0.1 * gain, 0.1 * gain);
  }
}

// --- CouplingBlock ----------------------------------------------------------

CouplingBlock::CouplingBlock(ParamStore& store, const std::string& prefix, int width, int hidden, double clamp,
                             int cond_width, Rng& rng)
    : width_(width),
      split_(width / 2),
      cond_width_(cond_width),
      clamp_(clamp),
      s1_(store, prefix + ".s1", width - width / 2 + cond_width, hidden, width / 2, rng),
      t1_(store, prefix + ".t1", width - width / 2 + cond_width, hidden, width / 2, rng),
      s2_(store, prefix + ".s2", width / 2 + cond_width, hidden, width - width / 2, rng),
      t2_(store, prefix + ".t2", width / 2 + cond_width, hidden, width - width / 2, rng) {
  if (width < 2) throw DimensionError("coupling width must allow a split, got " + std::to_string(width));
  if (!(clamp > 0.0)) throw DomainError("clamp amplitude must be positive");
  if (cond_width < 0) throw DimensionError("negative condition width");
}

Var CouplingBlock::clamped(Var s) const { return scale(cflow::tanh(scale(s, 1.0 / clamp_)), clamp_); }

Var CouplingBlock::subnet_input(Var part, const std::optional<Var>& cond) const {
  return cond_width_ > 0 ? concat(part, *cond) : part;
}

void CouplingBlock::check(Var v, const std::optional<Var>& cond) const {
  if (v.cols() != width_) {
    throw DimensionError("coupling block of width " + std::to_string(width_) + " got input " +
                         shape_str(v.rows(), v.cols()));
  }
  if (cond_width_ > 0) {
    if (!cond || cond->cols() != cond_width_ || cond->rows() != v.rows()) {
      throw DimensionError("coupling block expects a condition of width " + std::to_string(cond_width_));
    }
  } else if (cond && cond->cols() != 0) {
    throw DimensionError("unconditional coupling block given a condition");
  }
}

CouplingBlock::Result CouplingBlock::forward(Tape& tape, const ParamStore& store, Var u,
                                             std::optional<Var> cond) const {
  check(u, cond);
  auto [u1, u2] = cflow::split(u, split_);

  const Var in1 = subnet_input(u2, cond);
  const Var s1 = clamped(s1_.apply(tape, store, in1));
  const Var y1 = add(mul(u1, exp(s1)), t1_.apply(tape, store, in1));

  const Var in2 = subnet_input(y1, cond);
  const Var s2 = clamped(s2_.apply(tape, store, in2));
  const Var y2 = add(mul(u2, exp(s2)), t2_.apply(tape, store, in2));

  return {concat(y1, y2), add(sum_rows(s1), sum_rows(s2))};
}

Var CouplingBlock::inverse(Tape& tape, const ParamStore& store, Var y, std::optional<Var> cond) const {
  check(y, cond);
  auto [y1, y2] = cflow::split(y, split_);

  const Var in2 = subnet_input(y1, cond);
  const Var s2 = clamped(s2_.apply(tape, store, in2));
  const Var u2 = mul(sub(y2, t2_.apply(tape, store, in2)), exp(neg(s2)));

  const Var in1 = subnet_input(u2, cond);
  const Var s1 = clamped(s1_.apply(tape, store, in1));
  const Var u1 = mul(sub(y1, t1_.apply(tape, store, in1)), exp(neg(s1)));

  return concat(u1, u2);
}

void CouplingBlock::randomize(ParamStore& store, Rng& rng, double output_gain) const {
  for (const Mlp* net : {&s1_, &t1_, &s2_, &t2_}) net->randomize(store, rng, output_gain);
}

// --- Permutation ------------------------------------------------------------

Permutation::Permutation(std::vector<int> indices) : forward_(std::move(indices)), inverse_(forward_.size(), -1) {
  const int n = static_cast<int>(forward_.size());
  for (int j = 0; j < n; ++j) {
    const int src = forward_[j];
    if (src < 0 || src >= n || inverse_[src] != -1) throw DataError("permutation indices are not a bijection");
    inverse_[src] = j;
  }
}

Permutation Permutation::identity(int n) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return Permutation(std::move(idx));
}

Permutation Permutation::random(int n, std::uint64_t seed) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng.engine());
  return Permutation(std::move(idx));
}

bool Permutation::is_identity() const {
  for (std::size_t j = 0; j < forward_.size(); ++j) {
    if (forward_[j] != static_cast<int>(j)) return false;
  }
  return true;
}

// --- FlowModel --------------------------------------------------------------

FlowModel::FlowModel(DimPlan dims, FlowArch arch) : dims_(dims), arch_(arch) {
  dims_.validate();
  if (arch_.blocks < 0) throw DimensionError("negative block count");
  if (arch_.hidden < 1) throw DimensionError("hidden width must be positive");
  const int width = dims_.width();
  if (arch_.blocks > 0 && width < 2) throw DimensionError("width must allow a split");

  Rng init(Rng::derive_seed(arch_.seed, 1));
  blocks_.reserve(arch_.blocks);
  for (int i = 0; i < arch_.blocks; ++i) {
    blocks_.emplace_back(params_, "block" + std::to_string(i), width, arch_.hidden, arch_.clamp, 0, init);
  }
  for (int i = 0; i + 1 < arch_.blocks; ++i) {
    perms_.push_back(arch_.permute ? Permutation::random(width, Rng::derive_seed(arch_.seed, 0x100 + i))
                                   : Permutation::identity(width));
  }
}

void FlowModel::set_permutations(std::vector<Permutation> perms) {
  if (perms.size() != perms_.size()) {
    throw DimensionError("expected " + std::to_string(perms_.size()) + " permutations, got " +
                         std::to_string(perms.size()));
  }
  for (const auto& p : perms) {
    if (static_cast<int>(p.indices().size()) != dims_.width()) throw DimensionError("permutation width mismatch");
  }
  perms_ = std::move(perms);
}

FlowOutput FlowModel::forward(Tape& tape, Var x_padded) const {
  if (x_padded.cols() != dims_.width()) {
    throw DimensionError("flow expects input width " + std::to_string(dims_.width()) + ", got " +
                         shape_str(x_padded.rows(), x_padded.cols()));
  }
  Var h = x_padded;
  std::optional<Var> logdet;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto r = blocks_[i].forward(tape, params_, h);
    h = r.out;
    logdet = logdet ? add(*logdet, r.logdet) : r.logdet;
    if (i < perms_.size()) h = perms_[i].apply(h);
  }
  if (!logdet) logdet = tape.constant(Matrix::Zero(x_padded.rows(), 1));
  return {slice_cols(h, 0, dims_.cond_dim), slice_cols(h, dims_.cond_dim, dims_.width()), *logdet};
}

Var FlowModel::inverse(Tape& tape, Var c, Var z) const {
  if (c.cols() != dims_.cond_dim || z.cols() != dims_.dummy_dim || c.rows() != z.rows()) {
    throw DimensionError("flow inverse expects c " + shape_str(c.rows(), dims_.cond_dim) + " and z " +
                         shape_str(c.rows(), dims_.dummy_dim) + ", got " + shape_str(c.rows(), c.cols()) + " and " +
                         shape_str(z.rows(), z.cols()));
  }
  Var h = concat(c, z);
  for (std::size_t i = blocks_.size(); i-- > 0;) {
    h = blocks_[i].inverse(tape, params_, h);
    if (i > 0) h = perms_[i - 1].invert(h);
  }
  return h;
}

FlowValues FlowModel::forward_values(const Tensor& x_padded, Eigen::Index chunk) const {
  const Eigen::Index n = x_padded.rows();
  FlowValues out{Tensor(n, dims_.cond_dim), Tensor(n, dims_.dummy_dim), Tensor(n, 1)};
  for (Eigen::Index r = 0; r < n; r += chunk) {
    const Eigen::Index len = std::min(chunk, n - r);
    Tape tape;
    const auto f = forward(tape, tape.constant(Matrix(x_padded.matrix().middleRows(r, len))));
    out.c_hat.matrix().middleRows(r, len) = f.c_hat.value();
    out.z.matrix().middleRows(r, len) = f.z.value();
    out.logdet.matrix().middleRows(r, len) = f.logdet.value();
  }
  return out;
}

Tensor FlowModel::inverse_values(const Tensor& c, const Tensor& z, Eigen::Index chunk) const {
  if (c.rows() != z.rows()) throw DimensionError("inverse_values: row counts of c and z differ");
  const Eigen::Index n = c.rows();
  Tensor out(n, dims_.width());
  for (Eigen::Index r = 0; r < n; r += chunk) {
    const Eigen::Index len = std::min(chunk, n - r);
    Tape tape;
    const Var x = inverse(tape, tape.constant(Matrix(c.matrix().middleRows(r, len))),
                          tape.constant(Matrix(z.matrix().middleRows(r, len))));
    out.matrix().middleRows(r, len) = x.value();
  }
  return out;
}

void FlowModel::randomize(Rng& rng, double output_gain) {
  for (const auto& b : blocks_) b.randomize(params_, rng, output_gain);
}

// --- diagnostics ------------------------------------------------------------

Tensor log_density(const FlowModel& model, const Tensor& x_padded) {
  const auto f = model.forward_values(x_padded);
  const double w = model.dims().width();
  Tensor out(x_padded.rows(), 1);
  out.matrix() = (-0.5 * w * std::log(2.0 * std::numbers::pi) -
                  0.5 * (f.c_hat.matrix().rowwise().squaredNorm() + f.z.matrix().rowwise().squaredNorm()).array() +
                  f.logdet.matrix().array())
                     .matrix();
  return out;
}

double log_abs_det(const Matrix& a) {
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu{Eigen::MatrixXd(a)};
  return lu.matrixLU().diagonal().array().abs().log().sum();
}

double numerical_logdet(const FlowModel& model, std::span<const double> x_padded, double h) {
  const auto w = static_cast<Eigen::Index>(x_padded.size());
  if (w != model.dims().width()) throw DimensionError("numerical_logdet: point width mismatch");
  // Rows 2k and 2k+1 hold x + h e_k and x - h e_k.
  Tensor probes(2 * w, w);
  for (Eigen::Index k = 0; k < w; ++k) {
    for (Eigen::Index j = 0; j < w; ++j) {
      probes(2 * k, j) = x_padded[j];
      probes(2 * k + 1, j) = x_padded[j];
    }
    probes(2 * k, k) += h;
    probes(2 * k + 1, k) -= h;
  }
  const auto f = model.forward_values(probes);
  Matrix out(2 * w, w);
  out << f.c_hat.matrix(), f.z.matrix();
  Matrix jac(w, w);
  for (Eigen::Index k = 0; k < w; ++k) jac.col(k) = (out.row(2 * k) - out.row(2 * k + 1)).transpose() / (2.0 * h);
  return log_abs_det(jac);
}

}  // namespace cflow
