// Copyright (c) 2026 The cflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cflow/flow.hpp"
#include "cflow/param_store.hpp"
#include "cflow/tape.hpp"

namespace cflow {

/// Builds a scalar loss on the given tape, reading parameters from the store
/// under test. Must be deterministic: it is re-evaluated for every probe.
using LossClosure = std::function<Var(Tape&)>;

struct GradCheckOptions {
  double h = 1e-5;
  double tol = 1e-5;
  /// 0 checks every scalar; otherwise a seeded random subset per parameter.
  std::size_t coords_per_param = 0;
  std::uint64_t seed = 0;
  /// Denominator floor so that near-zero gradients are judged absolutely.
  double floor = 1e-4;
};

struct ParamCheck {
  std::string name;
  std::size_t checked = 0;
  double max_rel_err = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = true;
  std::vector<ParamCheck> params;
};

/// |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor);

/// Compares reverse-mode gradients against central differences with step h.
/// Parameter values are restored before returning; gradients are zeroed.
GradCheckReport gradcheck(const LossClosure& loss, ParamStore& params, const GradCheckOptions& opts = {});

struct FlowCheckOptions {
  int width = 10;
  int blocks = 8;
  int hidden = 32;
  std::uint64_t seed = 0;
  int batch = 8;
  std::size_t coords_per_param = 6;
  int logdet_points = 8;
  double grad_tol = 1e-5;
  double logdet_tol = 1e-3;
};

struct FlowCheckReport {
  GradCheckReport grad;
  /// |analytic - numerical| / max(|analytic|, |numerical|, 1) over the points.
  double logdet_max_rel_err = 0.0;
  bool logdet_pass = true;
  bool pass() const noexcept { return grad.pass && logdet_pass; }
};

/// Builds a randomised width-W flow (one condition column, W - 1 latent
/// columns, no padding) and checks reverse-mode gradients of a
/// likelihood-shaped loss and the analytic log-determinant against finite
/// differences. Throws DimensionError when W < 2 or blocks < 1.
FlowCheckReport check_flow(const FlowCheckOptions& opts);

}  // namespace cflow
