// Copyright (c) 2026 The cflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "cflow/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cflow/errors.hpp"

namespace cflow {

void CondNLLConfig::validate() const {
  if (!(epsilon > 0.0)) throw DomainError("epsilon must be positive");
  if (!(sigma_pad >= 0.0)) throw DomainError("sigma_pad must be non-negative");
}

double LossReport::term(std::string_view name) const {
  for (const auto& t : terms) {
    if (t.name == name) return t.value;
  }
  throw ContractError("loss report has no term '" + std::string(name) + "'");
}

double LossReport::weighted_sum() const {
  double s = 0.0;
  bool first = true;
  for (const auto& t : terms) {
    s = first ? t.weight * t.value : s + t.weight * t.value;
    first = false;
  }
  return s;
}

void MMDConfig::validate() const {
  if (bandwidths.empty()) throw DomainError("MMD needs at least one bandwidth");
  for (double h : bandwidths) {
    if (!(h > 0.0)) throw DomainError("MMD bandwidths must be positive");
  }
}

double RampSchedule::factor(int iteration) const {
  if (iteration < start) return 0.0;
  const double span = (end - start) / speed;
  if (span <= 0.0) return final_scale;
  return final_scale * std::min(1.0, (iteration - start) / span);
}

void RampSchedule::validate() const {
  if (start > end) throw DomainError("ramp start must not exceed ramp end");
  if (!(speed > 0.0)) throw DomainError("ramp speed must be positive");
  if (!(final_scale >= 0.0)) throw DomainError("ramp final scale must be non-negative");
}

void INNWeights::validate() const {
  if (w_y < 0.0 || w_z < 0.0 || w_x1 < 0.0 || w_x2 < 0.0) throw DomainError("INN weights must be non-negative");
  ramp.validate();
}

Var gaussian_nll(Var v, double stddev) {
  if (!(stddev > 0.0)) throw DomainError("gaussian_nll: standard deviation must be positive");
  const double m = static_cast<double>(v.cols());
  const double var = stddev * stddev;
  const double norm = 0.5 * m * std::log(2.0 * std::numbers::pi * var);
  return add_scalar(scale(sum_rows(square(v)), 0.5 / var), norm);
}

Tensor pad_input(const Tensor& x, int pad, double sigma, Rng& rng) {
  if (pad == 0) return x;
  Tensor out(x.rows(), x.cols() + pad);
  out.matrix().leftCols(x.cols()) = x.matrix();
  if (sigma > 0.0) out.matrix().rightCols(pad) = rng.normal(x.rows(), pad, sigma).matrix();
  return out;
}

namespace {

void check_batch(const FlowModel& model, const Tensor& x, const Tensor& y) {
  const auto& d = model.dims();
  if (x.cols() != d.x_dim || y.cols() != d.cond_dim || x.rows() != y.rows()) {
    throw DimensionError("batch shapes x " + x.shape_str() + ", y " + y.shape_str() + " do not match dim plan (D=" +
                         std::to_string(d.x_dim) + ", M=" + std::to_string(d.cond_dim) + ")");
  }
}

Objective finish(Tape& tape, std::vector<std::pair<LossTerm, Var>> parts) {
  Objective obj;
  std::optional<Var> total;
  for (auto& [term, var] : parts) {
    term.value = var.value()(0, 0);
    if (!std::isfinite(term.value)) throw DivergenceError(term.name, term.value);
    const Var weighted = term.weight == 1.0 ? var : scale(var, term.weight);
    total = total ? add(*total, weighted) : weighted;
    obj.report.terms.push_back(term);
  }
  obj.total = total ? *total : tape.constant(Matrix::Zero(1, 1));
  obj.report.total = obj.total.value()(0, 0);
  if (!std::isfinite(obj.report.total)) throw DivergenceError("total", obj.report.total);
  return obj;
}

/// sum_ij k(a_i, b_j) for the inverse multiquadric kernel, without keeping
/// the n×m kernel matrix on the tape.
Var kernel_sum(Var a, Var b, const std::vector<double>& bandwidths) {
  auto kernel_and_slope = [bandwidths](const Matrix& av, const Matrix& bv, Matrix* slope) {
    Matrix k = Matrix::Zero(av.rows(), bv.rows());
    if (slope) *slope = Matrix::Zero(av.rows(), bv.rows());
    for (Eigen::Index i = 0; i < av.rows(); ++i) {
      const Eigen::RowVectorXd d = (bv.rowwise() - av.row(i)).rowwise().squaredNorm().transpose();
      for (double h : bandwidths) {
        const Eigen::ArrayXXd inv = (d.array() + h).inverse();
        k.row(i).array() += h * inv;
        if (slope) slope->row(i).array() -= h * inv.square();
      }
    }
    return k;
  };
  const double s = kernel_and_slope(a.value(), b.value(), nullptr).sum();
  return a.tape->record(Matrix::Constant(1, 1, s), {a, b}, [a, b, kernel_and_slope](Tape& t, std::size_t self) {
    const double g = t.upstream(self)(0, 0);
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    Matrix w;
    kernel_and_slope(av, bv, &w);
    w *= 2.0 * g;
    if (t.requires_grad(a)) {
      Matrix& ga = t.grad_slot(a);
      ga += w.rowwise().sum().asDiagonal() * av;
      ga.noalias() -= w * bv;
    }
    if (t.requires_grad(b)) {
      Matrix& gb = t.grad_slot(b);
      gb += w.colwise().sum().transpose().asDiagonal() * bv;
      gb.noalias() -= w.transpose() * av;
    }
  });
}

bool lexicographically_less(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) return a.rows() < b.rows();
  return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

Var regression(Var diff, RegressionLoss mode) {
  const Var sq = sum_rows(square(diff));
  return mode == RegressionLoss::squared ? mean(sq) : mean(cflow::sqrt(add_scalar(sq, 1e-12)));
}

}  // namespace

Objective cond_nll(const FlowModel& model, Tape& tape, const Tensor& x, const Tensor& y, const CondNLLConfig& cfg,
                   Rng& rng) {
  cfg.validate();
  check_batch(model, x, y);
  const Var input = tape.constant(pad_input(x, model.dims().pad, cfg.sigma_pad, rng));
  const FlowOutput out = model.forward(tape, input);
  const Var v = sub(out.c_hat, tape.constant(y));
  return finish(tape, {{{"nll_z"}, mean(gaussian_nll(out.z, 1.0))},
                       {{"nll_v"}, mean(gaussian_nll(v, cfg.epsilon))},
                       {{"neg_logdet"}, neg(mean(out.logdet))}});
}

Var mmd(Var a, Var b, const MMDConfig& cfg) {
  cfg.validate();
  if (a.cols() != b.cols()) {
    throw DimensionError("mmd: widths differ, " + shape_str(a.rows(), a.cols()) + " vs " +
                         shape_str(b.rows(), b.cols()));
  }
  const double n = static_cast<double>(a.rows());
  const double m = static_cast<double>(b.rows());
  if (n < 2 || m < 2) throw DimensionError("mmd needs at least two rows per sample");

  // Orient the cross term canonically so mmd(a, b) and mmd(b, a) sum in the
  // same order.
  const Var cross =
      lexicographically_less(b.value(), a.value()) ? kernel_sum(b, a, cfg.bandwidths) : kernel_sum(a, b, cfg.bandwidths);
  const Var kaa = kernel_sum(a, a, cfg.bandwidths);
  const Var kbb = kernel_sum(b, b, cfg.bandwidths);
  const double diag = static_cast<double>(cfg.bandwidths.size());

  Var self_a, self_b;
  if (cfg.unbiased) {
    self_a = scale(add_scalar(kaa, -n * diag), 1.0 / (n * (n - 1.0)));
    self_b = scale(add_scalar(kbb, -m * diag), 1.0 / (m * (m - 1.0)));
  } else {
    self_a = scale(kaa, 1.0 / (n * n));
    self_b = scale(kbb, 1.0 / (m * m));
  }
  return sub(add(self_a, self_b), scale(cross, 2.0 / (n * m)));
}

double mmd(const Tensor& a, const Tensor& b, const MMDConfig& cfg) {
  Tape tape;
  return mmd(tape.constant(a), tape.constant(b), cfg).value()(0, 0);
}

Objective inn_losses(const FlowModel& model, Tape& tape, const Tensor& x, const Tensor& y, const Tensor& z_prior,
                     const INNConfig& cfg, int iteration, Rng& rng) {
  check_batch(model, x, y);
  cfg.weights.validate();
  const auto& d = model.dims();
  if (z_prior.rows() != x.rows() || z_prior.cols() != d.dummy_dim) {
    throw DimensionError("z prior sample " + z_prior.shape_str() + " does not match batch");
  }

  if (!(cfg.y_noise_std >= 0.0)) throw DomainError("y noise std must be non-negative");
  const Var x_pad = tape.constant(pad_input(x, d.pad, cfg.sigma_pad, rng));
  Tensor y_noisy = y;
  if (cfg.y_noise_std > 0.0) y_noisy.matrix() += rng.normal(y.rows(), y.cols(), cfg.y_noise_std).matrix();
  const Var y_true = tape.constant(std::move(y_noisy));
  const Var z_draw = tape.constant(z_prior);
  const FlowOutput out = model.forward(tape, x_pad);

  const Var l_y = regression(sub(y_true, out.c_hat), cfg.regression);
  const Var c_latent = cfg.detach_condition_in_latent ? tape.constant(out.c_hat.value()) : out.c_hat;
  const Var l_z = mmd(concat(c_latent, out.z), concat(y_true, z_draw), cfg.mmd);

  const Var perturb = tape.constant(rng.normal(x.rows(), d.dummy_dim, cfg.perturb_std));
  const Var z_rec = cfg.detach_latent_in_reconstruction ? tape.constant(out.z.value()) : out.z;
  const Var x_rec = model.inverse(tape, y_true, add(z_rec, perturb));
  const Var l_x1 = regression(sub(x_pad, x_rec), cfg.regression);

  const Var x_gen = model.inverse(tape, y_true, z_draw);
  const Var l_x2 = cfg.backward_mmd_on_padding || d.pad == 0
                       ? mmd(x_gen, x_pad, cfg.mmd)
                       : mmd(split(x_gen, d.x_dim).first, tape.constant(x), cfg.mmd);

  const double ramp = cfg.weights.ramp.factor(iteration);
  return finish(tape, {{{"L_y", 0.0, cfg.weights.w_y}, l_y},
                       {{"L_z", 0.0, cfg.weights.w_z}, l_z},
                       {{"L_x1", 0.0, cfg.weights.w_x1 * ramp}, l_x1},
                       {{"L_x2", 0.0, cfg.weights.w_x2 * ramp}, l_x2}});
}

Tensor conditional_sample(const FlowModel& model, const Tensor& condition, int n, const CondNLLConfig& cfg, Rng& rng,
                          VMode v_mode) {
  const auto& d = model.dims();
  if (n < 1) throw DomainError("conditional_sample needs n >= 1");
  if (condition.rows() != 1 || condition.cols() != d.cond_dim) {
    throw DimensionError("condition must be 1x" + std::to_string(d.cond_dim) + ", got " + condition.shape_str());
  }
  const Tensor z = rng.normal(n, d.dummy_dim);
  Tensor c(n, d.cond_dim);
  c.matrix().rowwise() = condition.matrix().row(0);
  if (v_mode == VMode::sampled) c.matrix() += rng.normal(n, d.cond_dim, cfg.epsilon).matrix();
  return conditional_sample(model, c, z);
}

Tensor conditional_sample(const FlowModel& model, const Tensor& conditions, const Tensor& z) {
  const Tensor full = model.inverse_values(conditions, z);
  return Tensor(Matrix(full.matrix().leftCols(model.dims().x_dim)));
}

Tensor infer_condition(const FlowModel& model, const Tensor& x, const CondNLLConfig& cfg, PadMode pad_mode, Rng& rng) {
  const auto& d = model.dims();
  if (x.cols() != d.x_dim) {
    throw DimensionError("infer_condition expects width " + std::to_string(d.x_dim) + ", got " + x.shape_str());
  }
  const double sigma = pad_mode == PadMode::sampled ? cfg.sigma_pad : 0.0;
  return model.forward_values(pad_input(x, d.pad, sigma, rng)).c_hat;
}

std::vector<int> argmax_rows(const Tensor& t) {
  std::vector<int> out(static_cast<std::size_t>(t.rows()));
  for (Eigen::Index r = 0; r < t.rows(); ++r) {
    Eigen::Index k = 0;
    t.matrix().row(r).maxCoeff(&k);
    out[static_cast<std::size_t>(r)] = static_cast<int>(k);
  }
  return out;
}

}  // namespace cflow
