// Copyright (c) 2026 The cflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "cflow/rng.hpp"

#include <sstream>

#include "cflow/errors.hpp"

namespace cflow {

Tensor Rng::normal(Eigen::Index rows, Eigen::Index cols, double stddev) {
  Tensor t(rows, cols);
  for (double& v : t.values()) v = stddev * normal_(engine_);
  return t;
}

Tensor Rng::uniform(Eigen::Index rows, Eigen::Index cols, double lo, double hi) {
  Tensor t(rows, cols);
  for (double& v : t.values()) v = lo + (hi - lo) * uniform_(engine_);
  return t;
}

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_ << ' ' << normal_ << ' ' << uniform_;
  return os.str();
}

void Rng::set_state(const std::string& s) {
  std::istringstream is(s);
  is >> engine_ >> normal_ >> uniform_;
  if (!is) throw ParseError("malformed rng state", 0, ParseError::Unit::byte);
}

std::uint64_t Rng::derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace cflow
