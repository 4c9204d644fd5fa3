// Copyright (c) 2026 The cflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cflow/ops.hpp"
#include "cflow/param_store.hpp"
#include "cflow/rng.hpp"
#include "cflow/tape.hpp"

namespace cflow {

/// Width bookkeeping of a conditional flow. The input side is x (x_dim)
/// followed by zero padding (pad); the output side is the condition part
/// (cond_dim) followed by the dummy part (dummy_dim).
struct DimPlan {
  int x_dim = 2;
  int pad = 8;
  int cond_dim = 8;
  int dummy_dim = 2;

  int width() const noexcept { return x_dim + pad; }
  /// Throws DimensionError unless x_dim + pad == cond_dim + dummy_dim,
  /// all non-negative, cond_dim >= 1 and dummy_dim >= 1.
  void validate() const;

  friend bool operator==(const DimPlan&, const DimPlan&) = default;
};

struct FlowArch {
  int blocks = 8;
  int hidden = 512;
  /// Scale clamp amplitude: s is replaced by clamp * tanh(s / clamp).
  double clamp = 2.0;
  /// false leaves every inter-block permutation as the identity.
  bool permute = true;
  std::uint64_t seed = 0;
};

/// width_in -> hidden -> hidden -> width_out, relu between layers, linear
/// output. The final layer starts at zero.
class Mlp {
 public:
  Mlp(ParamStore& store, const std::string& prefix, int in, int hidden, int out, Rng& rng);

  Var apply(Tape& tape, const ParamStore& store, Var x) const;
  /// Redraws every layer (including the output layer, scaled by
  /// output_gain) from the Glorot-uniform range; biases from ±0.1·gain.
  void randomize(ParamStore& store, Rng& rng, double output_gain) const;

  int in() const noexcept { return in_; }
  int out() const noexcept { return out_; }

 private:
  ParamId w_[3];
  ParamId b_[3];
  int in_;
  int out_;
};

/// Two-sided affine coupling. With cond_width > 0 every subnet also sees a
/// condition vector concatenated to its input.
class CouplingBlock {
 public:
  CouplingBlock(ParamStore& store, const std::string& prefix, int width, int hidden, double clamp, int cond_width,
                Rng& rng);

  struct Result {
    Var out;
    Var logdet;  ///< n×1
  };

  Result forward(Tape& tape, const ParamStore& store, Var u, std::optional<Var> cond = std::nullopt) const;
  Var inverse(Tape& tape, const ParamStore& store, Var y, std::optional<Var> cond = std::nullopt) const;

  void randomize(ParamStore& store, Rng& rng, double output_gain) const;

  int width() const noexcept { return width_; }
  int split() const noexcept { return split_; }
  int cond_width() const noexcept { return cond_width_; }
  double clamp() const noexcept { return clamp_; }

 private:
  Var clamped(Var s) const;
  Var subnet_input(Var part, const std::optional<Var>& cond) const;
  void check(Var v, const std::optional<Var>& cond) const;

  int width_;
  int split_;
  int cond_width_;
  double clamp_;
  Mlp s1_, t1_, s2_, t2_;
};

/// Fixed column permutation. Contributes nothing to the log-determinant.
class Permutation {
 public:
  explicit Permutation(std::vector<int> indices);
  static Permutation identity(int n);
  static Permutation random(int n, std::uint64_t seed);

  Var apply(Var t) const { return permute_cols(t, forward_); }
  Var invert(Var t) const { return permute_cols(t, inverse_); }

  const std::vector<int>& indices() const noexcept { return forward_; }
  bool is_identity() const;

 private:
  std::vector<int> forward_;
  std::vector<int> inverse_;
};

struct FlowOutput {
  Var c_hat;   ///< n×cond_dim
  Var z;       ///< n×dummy_dim
  Var logdet;  ///< n×1
};

/// Plain-value forward results.
struct FlowValues {
  Tensor c_hat;
  Tensor z;
  Tensor logdet;
};

/// Stack of coupling blocks with a fixed permutation between consecutive
/// blocks. The final block's output is not permuted.
class FlowModel {
 public:
  FlowModel(DimPlan dims, FlowArch arch);

  const DimPlan& dims() const noexcept { return dims_; }
  const FlowArch& arch() const noexcept { return arch_; }
  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }
  const std::vector<CouplingBlock>& blocks() const noexcept { return blocks_; }
  const std::vector<Permutation>& permutations() const noexcept { return perms_; }
  /// Replaces the inter-block permutations (blocks - 1 of them).
  void set_permutations(std::vector<Permutation> perms);

  FlowOutput forward(Tape& tape, Var x_padded) const;
  Var inverse(Tape& tape, Var c, Var z) const;

  /// Gradient-free evaluation in row chunks to bound tape memory.
  FlowValues forward_values(const Tensor& x_padded, Eigen::Index chunk = 512) const;
  Tensor inverse_values(const Tensor& c, const Tensor& z, Eigen::Index chunk = 512) const;

  /// Redraws all parameters so the flow is a non-trivial random bijection.
  void randomize(Rng& rng, double output_gain = 1.0);

 private:
  DimPlan dims_;
  FlowArch arch_;
  ParamStore params_;
  std::vector<CouplingBlock> blocks_;
  std::vector<Permutation> perms_;
};

/// log p(x) treating every output coordinate as standard normal; n×1.
Tensor log_density(const FlowModel& model, const Tensor& x_padded);

/// log|det J| of the forward map at one point, from a central-difference
/// Jacobian with step h.
double numerical_logdet(const FlowModel& model, std::span<const double> x_padded, double h = 1e-6);

/// log|det A| via partial-pivot LU.
double log_abs_det(const Matrix& a);

}  // namespace cflow
