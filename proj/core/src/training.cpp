// Copyright (c) 2026 The cflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "cflow/training.hpp"

#include <cmath>
#include <numeric>

#include "cflow/errors.hpp"

namespace cflow {

void adam_step(ParamStore& params, AdamState& state) {
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (ParamId id = 0; id < params.size(); ++id) {
      const auto& p = params.value(id);
      state.m.push_back(Matrix::Zero(p.rows(), p.cols()));
      state.v.push_back(Matrix::Zero(p.rows(), p.cols()));
    }
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (ParamId id = 0; id < params.size(); ++id) {
    const auto g = params.grad(id).matrix().array();
    auto m = state.m[id].array();
    auto v = state.v[id].array();
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.square();
    params.value(id).matrix().array() -= state.lr * (m / bc1) / ((v / bc2).sqrt() + state.eps_hat);
  }
  params.zero_grad();
}

void clip_grad_norm(ParamStore& params, double max_norm) {
  const double norm = params.grad_norm();
  if (norm <= max_norm || norm == 0.0) return;
  const double s = max_norm / norm;
  for (ParamId id = 0; id < params.size(); ++id) params.grad(id).matrix() *= s;
}

void TrainConfig::validate() const {
  if (iterations < 0) throw DomainError("iterations must be non-negative");
  if (batch_size < 2) throw DomainError("batch_size must be at least 2");
  if (!(lr > 0.0)) throw DomainError("learning rate must be positive");
  if (clip_norm < 0.0) throw DomainError("clip_norm must be non-negative");
  cond.validate();
  inn.weights.validate();
  inn.mmd.validate();
}

// --- DatasetSource ----------------------------------------------------------

DatasetSource::DatasetSource(Tensor x, Tensor y) : x_(std::move(x)), y_(std::move(y)) {
  if (x_.rows() != y_.rows()) throw DimensionError("dataset x and y row counts differ");
  if (x_.rows() < 2) throw DimensionError("dataset needs at least two rows");
  order_.resize(static_cast<std::size_t>(x_.rows()));
  std::iota(order_.begin(), order_.end(), Eigen::Index{0});
  cursor_ = x_.rows();
}

int DatasetSource::batches_per_epoch(int batch_size) const {
  const Eigen::Index n = x_.rows();
  Eigen::Index full = n / batch_size;
  if (n % batch_size >= 2) ++full;
  return static_cast<int>(std::max<Eigen::Index>(full, 1));
}

Batch DatasetSource::next(int batch_size, Rng& rng) {
  const Eigen::Index n = x_.rows();
  if (n - cursor_ < 2) {
    std::shuffle(order_.begin(), order_.end(), rng.engine());
    cursor_ = 0;
  }
  const Eigen::Index len = std::min<Eigen::Index>(batch_size, n - cursor_);
  Batch b{Tensor(len, x_.cols()), Tensor(len, y_.cols())};
  for (Eigen::Index r = 0; r < len; ++r) {
    const Eigen::Index src = order_[static_cast<std::size_t>(cursor_ + r)];
    b.x.matrix().row(r) = x_.matrix().row(src);
    b.y.matrix().row(r) = y_.matrix().row(src);
  }
  cursor_ += len;
  return b;
}

// --- training loop ----------------------------------------------------------

LossReport objective_step(FlowModel& model, const Batch& batch, const TrainConfig& cfg, int iteration, Rng& rng) {
  Tape tape;
  Objective obj;
  if (cfg.objective == ObjectiveKind::cond_nll) {
    obj = cond_nll(model, tape, batch.x, batch.y, cfg.cond, rng);
  } else {
    const Tensor z_prior = rng.normal(batch.x.rows(), model.dims().dummy_dim);
    obj = inn_losses(model, tape, batch.x, batch.y, z_prior, cfg.inn, iteration, rng);
  }
  tape.backward(obj.total, model.params());
  return obj.report;
}

TrainHistory train(FlowModel& model, BatchSource& data, const TrainConfig& cfg, AdamState& state, Rng& rng,
                   const TrainHooks& hooks) {
  cfg.validate();
  state.lr = cfg.lr;
  TrainHistory history;
  model.params().zero_grad();
  for (int i = 0; i < cfg.iterations; ++i) {
    const int iteration = static_cast<int>(state.t);
    LossReport report;
    try {
      const Batch batch = data.next(cfg.batch_size, rng);
      report = objective_step(model, batch, cfg, iteration, rng);
      if (!model.params().grads_finite()) throw DivergenceError("gradient", model.params().grad_norm());
    } catch (const DivergenceError& e) {
      model.params().zero_grad();
      std::string where;
      if (!hooks.checkpoint_path.empty()) {
        save_checkpoint(hooks.checkpoint_path, model, state, cfg, rng);
        where = hooks.checkpoint_path.string();
      }
      throw TrainingDiverged(e, iteration, std::move(history), where);
    }
    if (cfg.clip_norm > 0.0) clip_grad_norm(model.params(), cfg.clip_norm);
    adam_step(model.params(), state);
    history.records.push_back({iteration, report});
    if (hooks.on_iteration) hooks.on_iteration(iteration, report);
    if (cfg.checkpoint_every > 0 && !hooks.checkpoint_path.empty() && (i + 1) % cfg.checkpoint_every == 0) {
      save_checkpoint(hooks.checkpoint_path, model, state, cfg, rng);
    }
  }
  return history;
}

}  // namespace cflow
