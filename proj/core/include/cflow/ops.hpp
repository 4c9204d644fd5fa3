// Copyright (c) 2026 The cflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <utility>

#include "cflow/tape.hpp"

namespace cflow {

enum class Activation { none, relu, tanh };

// Linear algebra.
Var matmul(Var a, Var b);
/// x[n×m] + b[1×m] broadcast over rows.
Var add_bias(Var x, Var b);
/// act(x·W + b), fused so only the activated output is stored.
Var dense(Var x, Var w, Var b, Activation act);

// Elementwise. Binary ops require equal shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var exp(Var a);
/// Throws DomainError if any entry is <= 0.
Var log(Var a);
Var tanh(Var a);
/// relu'(0) is taken as 0.
Var relu(Var a);
Var square(Var a);
Var sqrt(Var a);
Var reciprocal(Var a);

// Structure.
Var concat(Var a, Var b);
/// Columns [0, at) and [at, cols). Requires 0 < at < cols.
std::pair<Var, Var> split(Var t, Eigen::Index at);
Var slice_cols(Var t, Eigen::Index begin, Eigen::Index end);
/// out[:, j] = t[:, perm[j]].
Var permute_cols(Var t, std::span<const int> perm);

// Reductions.
Var sum(Var t);
Var mean(Var t);
/// Per-row sum, n×1.
Var sum_rows(Var t);

/// out(i, j) = ||a_i - b_j||^2, computed from coordinate differences so that
/// identical rows give exactly 0.
Var pairwise_sq_dist(Var a, Var b);

}  // namespace cflow
