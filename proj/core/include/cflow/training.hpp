// Copyright (c) 2026 The cflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cflow/errors.hpp"
#include "cflow/flow.hpp"
#include "cflow/objectives.hpp"
#include "cflow/param_store.hpp"
#include "cflow/rng.hpp"

namespace cflow {

struct AdamState {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;
  std::int64_t t = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

/// One Adam update from the gradients in `params`, which are then zeroed.
/// Moments are allocated on the first call.
void adam_step(ParamStore& params, AdamState& state);

/// Scales all gradients so their global norm is at most max_norm.
void clip_grad_norm(ParamStore& params, double max_norm);

enum class ObjectiveKind { cond_nll, inn };

struct TrainConfig {
  int iterations = 400;
  int batch_size = 1600;
  std::uint64_t seed = 0;
  double lr = 0.001;
  ObjectiveKind objective = ObjectiveKind::cond_nll;
  CondNLLConfig cond;
  INNConfig inn;
  int log_every = 10;
  /// 0 disables periodic checkpoints.
  int checkpoint_every = 0;
  /// Global-norm clip; 0 disables.
  double clip_norm = 0.0;

  void validate() const;
};

struct Batch {
  Tensor x;
  Tensor y;
};

/// Supplies training minibatches. Implementations draw all randomness from
/// the rng passed in so the run is fully determined by the seed.
class BatchSource {
 public:
  virtual ~BatchSource() = default;
  virtual Batch next(int batch_size, Rng& rng) = 0;
};

/// Finite dataset, reshuffled every epoch. The final batch of an epoch may
/// be smaller than batch_size (but at least 2 rows).
class DatasetSource : public BatchSource {
 public:
  DatasetSource(Tensor x, Tensor y);
  Batch next(int batch_size, Rng& rng) override;
  Eigen::Index size() const noexcept { return x_.rows(); }
  int batches_per_epoch(int batch_size) const;

 private:
  Tensor x_;
  Tensor y_;
  std::vector<Eigen::Index> order_;
  Eigen::Index cursor_ = 0;
};

struct IterRecord {
  int iteration = 0;
  LossReport report;
};

struct TrainHistory {
  std::vector<IterRecord> records;
};

struct TrainHooks {
  /// Called after every optimiser step.
  std::function<void(int iteration, const LossReport&)> on_iteration;
  /// Destination for periodic and abort checkpoints; empty disables them.
  std::filesystem::path checkpoint_path;
};

/// Thrown when the objective (or its gradient) stops being finite. The
/// model still holds the last finite parameters; if a checkpoint path was
/// configured they have been written there.
class TrainingDiverged : public DivergenceError {
 public:
  TrainingDiverged(const DivergenceError& cause, int iteration, TrainHistory history, std::string checkpoint)
      : DivergenceError(cause),
        iteration_(iteration),
        history_(std::move(history)),
        checkpoint_(std::move(checkpoint)) {}

  int iteration() const noexcept { return iteration_; }
  const TrainHistory& history() const noexcept { return history_; }
  const std::string& checkpoint() const noexcept { return checkpoint_; }

 private:
  int iteration_;
  TrainHistory history_;
  std::string checkpoint_;
};

/// Runs objective -> backward -> Adam for cfg.iterations steps. `rng` drives
/// batches, padding noise and prior draws; `state` carries the optimiser
/// across calls.
TrainHistory train(FlowModel& model, BatchSource& data, const TrainConfig& cfg, AdamState& state, Rng& rng,
                   const TrainHooks& hooks = {});

/// Evaluates the configured objective on one batch and backpropagates into
/// the model's gradient accumulators.
LossReport objective_step(FlowModel& model, const Batch& batch, const TrainConfig& cfg, int iteration, Rng& rng);

// --- checkpoints -------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  FlowModel model;
  AdamState optimizer;
  TrainConfig config;
  std::string rng_state;
};

/// Writes a self-describing JSON document. Parameters are stored as decimal
/// arrays that round-trip every double exactly.
void save_checkpoint(const std::filesystem::path& path, const FlowModel& model, const AdamState& optimizer,
                     const TrainConfig& config, const Rng& rng);
std::string checkpoint_to_string(const FlowModel& model, const AdamState& optimizer, const TrainConfig& config,
                                 const Rng& rng);

/// Throws ParseError (byte offset) on malformed input and VersionError on a
/// format version mismatch. Nothing is returned on failure.
Checkpoint load_checkpoint(const std::filesystem::path& path);
Checkpoint checkpoint_from_string(const std::string& text);

}  // namespace cflow
