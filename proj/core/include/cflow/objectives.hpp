// Copyright (c) 2026 The cflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "cflow/flow.hpp"
#include "cflow/rng.hpp"
#include "cflow/tape.hpp"

namespace cflow {

struct CondNLLConfig {
  /// Standard deviation of the relaxed condition: c_hat = y + v, v ~ N(0, epsilon^2 I).
  double epsilon = 0.1;
  /// Standard deviation of the noise put into the padding columns.
  double sigma_pad = 0.05;

  void validate() const;
};

struct LossTerm {
  std::string name;
  double value = 0.0;
  double weight = 1.0;
};

/// Per-term breakdown of one objective evaluation. All values are batch
/// means; total is the weighted sum of the terms in listed order.
struct LossReport {
  double total = 0.0;
  std::vector<LossTerm> terms;

  double term(std::string_view name) const;
  /// Recomputes sum(weight * value) in term order.
  double weighted_sum() const;
};

/// A loss on a tape together with its breakdown.
struct Objective {
  Var total;
  LossReport report;
};

struct MMDConfig {
  /// Inverse multiquadric k(u, w) = sum_h h / (h + |u - w|^2).
  std::vector<double> bandwidths{0.05, 0.2, 0.9};
  /// false gives the biased V-statistic (diagonal terms kept).
  bool unbiased = true;

  void validate() const;
};

enum class RegressionLoss { squared, norm };

/// Linear ramp for the backward INN terms: factor 0 before start, final_scale
/// after end, linear in between. speed > 1 reaches final_scale sooner.
struct RampSchedule {
  int start = 0;
  int end = 200;
  double final_scale = 1.0;
  double speed = 1.0;

  double factor(int iteration) const;
  void validate() const;
};

struct INNWeights {
  double w_y = 1.0;
  double w_z = 1.0;
  double w_x1 = 1.0;
  double w_x2 = 1.0;
  RampSchedule ramp;

  void validate() const;
};

struct INNConfig {
  double sigma_pad = 0.05;
  /// Std of the perturbation added to f_z(x) in the backward regression term.
  double perturb_std = 0.05;
  /// Std of the noise added to the one-hot targets before every loss term.
  double y_noise_std = 0.1;
  /// Stops the latent MMD's gradient through the f_y(x) half, leaving L_y
  /// alone to fit the condition.
  bool detach_condition_in_latent = true;
  /// Treats f_z(x) as a constant inside the reconstruction term, so L_x1
  /// trains the inverse direction only.
  bool detach_latent_in_reconstruction = true;
  /// Compares generated and true samples on the padding columns as well.
  bool backward_mmd_on_padding = false;
  RegressionLoss regression = RegressionLoss::squared;
  MMDConfig mmd;
  INNWeights weights;
};

/// Per-row (M/2) log(2 pi std^2) + |v|^2 / (2 std^2); n×1.
Var gaussian_nll(Var v, double stddev);

/// Pads x with x0 ~ N(0, sigma^2 I) (exact zeros when sigma == 0).
Tensor pad_input(const Tensor& x, int pad, double sigma, Rng& rng);

/// Exact conditional negative log-likelihood of [x, x0] given y:
/// mean[ nll(z; 1) + nll(c_hat - y; epsilon) - logdet ]. Terms are
/// nll_z, nll_v, neg_logdet. Throws DivergenceError on a non-finite term.
Objective cond_nll(const FlowModel& model, Tape& tape, const Tensor& x, const Tensor& y, const CondNLLConfig& cfg,
                   Rng& rng);

/// Kernel two-sample statistic between the rows of a and b.
Var mmd(Var a, Var b, const MMDConfig& cfg);
double mmd(const Tensor& a, const Tensor& b, const MMDConfig& cfg);

/// Four-term INN objective (L_y, L_z, L_x1, L_x2); the backward pair is
/// scaled by the ramp factor at `iteration`. z_prior holds n×K standard
/// normal draws.
Objective inn_losses(const FlowModel& model, Tape& tape, const Tensor& x, const Tensor& y, const Tensor& z_prior,
                     const INNConfig& cfg, int iteration, Rng& rng);

enum class VMode { sampled, zero };
enum class PadMode { zeros, sampled };

/// Draws n samples of x given condition row C (1×M): z ~ N(0, I),
/// c = C + epsilon * eta (or C exactly), keeps the first D columns of the
/// inverse.
Tensor conditional_sample(const FlowModel& model, const Tensor& condition, int n, const CondNLLConfig& cfg, Rng& rng,
                          VMode v_mode);
/// Same with caller-provided z (n×K) and condition rows (n×M).
Tensor conditional_sample(const FlowModel& model, const Tensor& conditions, const Tensor& z);

/// Forward-process condition estimate c_hat for each row of x.
Tensor infer_condition(const FlowModel& model, const Tensor& x, const CondNLLConfig& cfg, PadMode pad_mode, Rng& rng);

/// Row-wise argmax.
std::vector<int> argmax_rows(const Tensor& t);

}  // namespace cflow
