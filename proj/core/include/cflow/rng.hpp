// Copyright (c) 2026 The cflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "cflow/tensor.hpp"

namespace cflow {

/// Explicit random stream. Every stochastic routine takes one of these by
/// reference; nothing draws from ambient state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  std::size_t uniform_index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }

  Tensor normal(Eigen::Index rows, Eigen::Index cols, double stddev = 1.0);
  Tensor uniform(Eigen::Index rows, Eigen::Index cols, double lo, double hi);

  std::mt19937_64& engine() noexcept { return engine_; }

  /// Full state including the normal distribution's cached deviate.
  std::string state() const;
  void set_state(const std::string& s);

  /// Independent child stream derived from (seed, stream) by splitmix64.
  static std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace cflow
