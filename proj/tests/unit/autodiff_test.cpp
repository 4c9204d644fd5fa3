// Copyright (c) 2026 The cflow Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "cflow/errors.hpp"
#include "cflow/gradcheck.hpp"
#include "cflow/ops.hpp"
#include "cflow/rng.hpp"

namespace cflow {
namespace {

Tensor uniform(Rng& rng, Eigen::Index r, Eigen::Index c, double lo = -2.0, double hi = 2.0) {
  return rng.uniform(r, c, lo, hi);
}

/// Checks d(sum(w ⊙ op(inputs)))/d(inputs) against central differences.
GradCheckReport check_op(std::vector<Tensor> inputs, const std::function<Var(std::vector<Var>&)>& op,
                         std::uint64_t seed = 0) {
  ParamStore store;
  for (std::size_t i = 0; i < inputs.size(); ++i) store.add("in" + std::to_string(i), inputs[i]);
  Tensor weights;
  {
    Tape probe;
    std::vector<Var> vs;
    for (ParamId id = 0; id < store.size(); ++id) vs.push_back(probe.param(store, id));
    const Var out = op(vs);
    Rng rng(seed + 99);
    weights = rng.uniform(out.rows(), out.cols(), 0.5, 1.5);
  }
  return gradcheck(
      [&](Tape& t) {
        std::vector<Var> vs;
        for (ParamId id = 0; id < store.size(); ++id) vs.push_back(t.param(store, id));
        return sum(mul(op(vs), t.constant(weights)));
      },
      store, {1e-5, 1e-5, 0, seed, 1e-4});
}

TEST(Matmul, IdentityTimesMatrix) {
  Tape t;
  const Var i2 = t.constant(Tensor::from_rows({{1, 0}, {0, 1}}));
  const Var a = t.constant(Tensor::from_rows({{1, 2}, {3, 4}}));
  EXPECT_EQ(t.tensor(matmul(i2, a)), Tensor::from_rows({{1, 2}, {3, 4}}));
}

TEST(Matmul, RowTimesColumn) {
  Tape t;
  const Var out = matmul(t.constant(Tensor::from_rows({{1, 2}})), t.constant(Tensor::from_rows({{3}, {4}})));
  EXPECT_EQ(t.tensor(out), Tensor::from_rows({{11}}));
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  Rng rng(1);
  const auto r = check_op({uniform(rng, 3, 4), uniform(rng, 4, 2)},
                          [](std::vector<Var>& v) { return matmul(v[0], v[1]); });
  EXPECT_LT(r.max_rel_err, 1e-6);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Tape t;
  try {
    matmul(t.constant(Tensor(2, 3)), t.constant(Tensor(2, 3)));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos);
  }
}

TEST(Elementwise, ExpOfZeros) {
  Tape t;
  EXPECT_EQ(t.tensor(exp(t.constant(Tensor(1, 3)))), Tensor::from_rows({{1, 1, 1}}));
}

TEST(Elementwise, Relu) {
  Tape t;
  EXPECT_EQ(t.tensor(relu(t.constant(Tensor::from_rows({{-1, 0, 2}})))), Tensor::from_rows({{0, 0, 2}}));
}

TEST(Elementwise, TanhDerivativeAtPointThree) {
  const auto r = check_op({Tensor::scalar(0.3)}, [](std::vector<Var>& v) { return tanh(v[0]); });
  EXPECT_LT(r.max_rel_err, 1e-6);
  Tape t;
  const Var x = t.input(Tensor::scalar(0.3));
  t.backward(tanh(x));
  EXPECT_NEAR(t.grad(x)(0, 0), 1.0 - std::tanh(0.3) * std::tanh(0.3), 1e-15);
}

TEST(Elementwise, LogOfNonPositiveIsDomainError) {
  Tape t;
  EXPECT_THROW(log(t.constant(Tensor::from_rows({{1.0, 0.0}}))), DomainError);
}

TEST(Elementwise, ShapeMismatch) {
  Tape t;
  EXPECT_THROW(add(t.constant(Tensor(2, 2)), t.constant(Tensor(2, 3))), DimensionError);
  EXPECT_THROW(mul(t.constant(Tensor(1, 2)), t.constant(Tensor(2, 1))), DimensionError);
}

TEST(Structure, ConcatScalars) {
  Tape t;
  EXPECT_EQ(t.tensor(concat(t.constant(Tensor::scalar(1)), t.constant(Tensor::scalar(2)))),
            Tensor::from_rows({{1, 2}}));
}

TEST(Structure, SplitOfConcatIsExact) {
  Rng rng(2);
  Tape t;
  const Tensor a = rng.normal(5, 3);
  const Tensor b = rng.normal(5, 4);
  const auto [l, r] = split(concat(t.constant(a), t.constant(b)), 3);
  EXPECT_EQ(t.tensor(l), a);
  EXPECT_EQ(t.tensor(r), b);
}

TEST(Structure, SplitGradientIsIndicator) {
  Tape t;
  const Var x = t.input(Tensor(2, 5));
  t.backward(sum(split(x, 2).second));
  const Tensor expected = Tensor::from_rows({{0, 0, 1, 1, 1}, {0, 0, 1, 1, 1}});
  EXPECT_EQ(Tensor(t.grad(x)), expected);
}

TEST(Structure, SplitPointOutOfRange) {
  Tape t;
  const Var x = t.constant(Tensor(2, 4));
  EXPECT_THROW(split(x, 0), DimensionError);
  EXPECT_THROW(split(x, 4), DimensionError);
}

TEST(Structure, ConcatRowMismatch) {
  Tape t;
  EXPECT_THROW(concat(t.constant(Tensor(2, 1)), t.constant(Tensor(3, 1))), DimensionError);
}

TEST(Reduce, SumOfTwoByTwo) {
  Tape t;
  EXPECT_EQ(t.value(sum(t.constant(Tensor::from_rows({{1, 2}, {3, 4}}))))(0, 0), 10.0);
}

TEST(Reduce, MeanOfZeros) {
  Tape t;
  EXPECT_EQ(t.value(mean(t.constant(Tensor(4, 3))))(0, 0), 0.0);
}

TEST(Reduce, GradientOfSumIsOnes) {
  Rng rng(3);
  Tape t;
  const Var x = t.input(rng.normal(3, 4));
  t.backward(sum(x));
  EXPECT_TRUE(t.grad(x).isApprox(Matrix::Ones(3, 4)));
  EXPECT_EQ(t.grad(x), Matrix::Ones(3, 4));
}

TEST(Backward, LinearGradientIsBroadcastInput) {
  ParamStore store;
  const ParamId w = store.add("w", Tensor::from_rows({{0.5, -1.0}, {2.0, 0.25}, {1.0, 1.0}}));
  const Tensor x = Tensor::from_rows({{1.5}, {-2.0}});
  Tape t;
  t.backward(sum(matmul(t.param(store, w), t.constant(x))), store);
  EXPECT_EQ(store.grad(w), Tensor::from_rows({{1.5, -2.0}, {1.5, -2.0}, {1.5, -2.0}}));
}

TEST(Backward, TwoCallsAccumulate) {
  Rng rng(4);
  ParamStore store;
  const ParamId w = store.add("w", rng.normal(3, 3));
  const Tensor x = rng.normal(4, 3);
  auto run = [&] {
    Tape t;
    t.backward(sum(tanh(matmul(t.constant(x), t.param(store, w)))), store);
  };
  run();
  const Tensor once = store.grad(w);
  run();
  EXPECT_EQ(store.grad(w).matrix(), (2.0 * once.matrix()).eval());
}

TEST(Backward, NonScalarLossIsContractError) {
  Tape t;
  const Var x = t.input(Tensor(2, 2));
  EXPECT_THROW(t.backward(x), ContractError);
}

TEST(Backward, ParamWithoutStoreIsContractError) {
  ParamStore store;
  const ParamId w = store.add("w", Tensor::scalar(1.0));
  Tape t;
  EXPECT_THROW(t.backward(sum(t.param(store, w))), ContractError);
}

TEST(Backward, ThreeLayerTanhMlpMatchesFiniteDifferences) {
  Rng rng(5);
  ParamStore store;
  const int sizes[] = {3, 6, 5, 2};
  for (int l = 0; l < 3; ++l) {
    store.add("w" + std::to_string(l), rng.normal(sizes[l], sizes[l + 1], 0.7));
    store.add("b" + std::to_string(l), rng.normal(1, sizes[l + 1], 0.3));
  }
  const Tensor x = rng.uniform(7, 3, -2.0, 2.0);
  const auto r = gradcheck(
      [&](Tape& t) {
        Var h = t.constant(x);
        for (ParamId l = 0; l < 3; ++l) {
          h = dense(h, t.param(store, 2 * l), t.param(store, 2 * l + 1), l < 2 ? Activation::tanh : Activation::none);
        }
        return mean(square(h));
      },
      store);
  EXPECT_TRUE(r.pass);
  EXPECT_LT(r.max_rel_err, 1e-5);
  for (const auto& p : r.params) EXPECT_EQ(p.checked, store.value(*store.find(p.name)).values().size());
}

TEST(GradCheck, LinearModelIsNearlyExact) {
  Rng rng(6);
  ParamStore store;
  store.add("w", rng.normal(4, 1));
  store.add("b", rng.normal(1, 1));
  const Tensor x = rng.normal(10, 4);
  const auto r = gradcheck(
      [&](Tape& t) { return sum(add_bias(matmul(t.constant(x), t.param(store, 0)), t.param(store, 1))); }, store);
  EXPECT_LT(r.max_rel_err, 1e-9);
}

TEST(GradCheck, CorruptedGradientRuleIsReported) {
  Rng rng(7);
  ParamStore store;
  store.add("a", rng.uniform(3, 3, 0.5, 1.5));
  auto broken_square = [](Var a) {
    return a.tape->record(a.value().array().square().matrix(), {a}, [a](Tape& t, std::size_t self) {
      t.grad_slot(a) += t.upstream(self).cwiseProduct(a.value());  // missing factor 2
    });
  };
  const auto r = gradcheck([&](Tape& t) { return sum(broken_square(t.param(store, 0))); }, store);
  EXPECT_FALSE(r.pass);
  EXPECT_GT(r.max_rel_err, 0.1);
}

TEST(GradCheck, RestoresParametersAndZeroesGradients) {
  Rng rng(8);
  ParamStore store;
  const Tensor init = rng.normal(2, 3);
  store.add("w", init);
  gradcheck([&](Tape& t) { return sum(exp(t.param(store, 0))); }, store);
  EXPECT_EQ(store.value(0), init);
  EXPECT_EQ(store.grad(0).matrix().cwiseAbs().maxCoeff(), 0.0);
}

TEST(GradCheck, SampledCoordinates) {
  Rng rng(9);
  ParamStore store;
  store.add("w", rng.normal(10, 10));
  const auto r = gradcheck([&](Tape& t) { return sum(square(t.param(store, 0))); }, store, {1e-5, 1e-5, 7, 3, 1e-4});
  EXPECT_EQ(r.params.at(0).checked, 7u);
  EXPECT_TRUE(r.pass);
}

// Property: every differentiable op agrees with central differences on
// random inputs in [-2, 2] (positive sub-range where the domain requires it).
struct OpCase {
  const char* name;
  int arity;
  double lo;
  std::function<Var(std::vector<Var>&)> op;
};

void PrintTo(const OpCase& c, std::ostream* os) { *os << c.name; }

class OpGradient : public ::testing::TestWithParam<OpCase> {};

TEST_P(OpGradient, MatchesFiniteDifferences) {
  const OpCase& c = GetParam();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(100 + seed);
    std::vector<Tensor> inputs;
    for (int i = 0; i < c.arity; ++i) inputs.push_back(uniform(rng, 3, 4, c.lo, 2.0));
    if (std::string(c.name) == "relu") {
      // Keep away from the kink.
      for (double& v : inputs[0].values()) v = v < 0 ? std::min(v, -0.01) : std::max(v, 0.01);
    }
    const auto r = check_op(inputs, c.op, seed);
    EXPECT_LT(r.max_rel_err, 1e-5) << c.name << " seed " << seed;
  }
}

const OpCase kOpCases[] = {
    {"add", 2, -2.0, [](auto& v) { return add(v[0], v[1]); }},
    {"sub", 2, -2.0, [](auto& v) { return sub(v[0], v[1]); }},
    {"mul", 2, -2.0, [](auto& v) { return mul(v[0], v[1]); }},
    {"neg", 1, -2.0, [](auto& v) { return neg(v[0]); }},
    {"scale", 1, -2.0, [](auto& v) { return scale(v[0], -1.7); }},
    {"add_scalar", 1, -2.0, [](auto& v) { return add_scalar(v[0], 0.3); }},
    {"exp", 1, -2.0, [](auto& v) { return exp(v[0]); }},
    {"log", 1, 0.1, [](auto& v) { return log(v[0]); }},
    {"tanh", 1, -2.0, [](auto& v) { return tanh(v[0]); }},
    {"relu", 1, -2.0, [](auto& v) { return relu(v[0]); }},
    {"square", 1, -2.0, [](auto& v) { return square(v[0]); }},
    {"sqrt", 1, 0.1, [](auto& v) { return sqrt(v[0]); }},
    {"reciprocal", 1, 0.1, [](auto& v) { return reciprocal(v[0]); }},
    {"concat", 2, -2.0, [](auto& v) { return concat(v[0], v[1]); }},
    {"split_first", 1, -2.0, [](auto& v) { return split(v[0], 1).first; }},
    {"slice_cols", 1, -2.0, [](auto& v) { return slice_cols(v[0], 1, 3); }},
    {"permute_cols", 1, -2.0,
     [](auto& v) {
       static const int perm[] = {2, 0, 3, 1};
       return permute_cols(v[0], perm);
     }},
    {"sum", 1, -2.0, [](auto& v) { return sum(v[0]); }},
    {"mean", 1, -2.0, [](auto& v) { return mean(v[0]); }},
    {"sum_rows", 1, -2.0, [](auto& v) { return sum_rows(v[0]); }},
    {"pairwise_sq_dist", 2, -2.0, [](auto& v) { return pairwise_sq_dist(v[0], v[1]); }},
};

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient, ::testing::ValuesIn(kOpCases),
                         [](const auto& info) { return std::string(info.param.name); });

TEST(AddBias, GradientMatchesFiniteDifferences) {
  Rng rng(10);
  const auto r = check_op({uniform(rng, 5, 3), uniform(rng, 1, 3)},
                          [](std::vector<Var>& v) { return add_bias(v[0], v[1]); });
  EXPECT_LT(r.max_rel_err, 1e-5);
}

TEST(Dense, MatchesUnfusedComposition) {
  Rng rng(11);
  const Tensor x = rng.normal(6, 4);
  const Tensor w = rng.normal(4, 3);
  const Tensor b = rng.normal(1, 3);
  for (Activation act : {Activation::none, Activation::relu, Activation::tanh}) {
    Tape t;
    const Var fused = dense(t.constant(x), t.constant(w), t.constant(b), act);
    Var ref = add_bias(matmul(t.constant(x), t.constant(w)), t.constant(b));
    if (act == Activation::relu) ref = relu(ref);
    if (act == Activation::tanh) ref = tanh(ref);
    EXPECT_TRUE(t.value(fused).isApprox(t.value(ref), 1e-14));
  }
}

TEST(Dense, GradientMatchesFiniteDifferences) {
  Rng rng(12);
  for (Activation act : {Activation::none, Activation::tanh}) {
    const auto r = check_op({uniform(rng, 5, 4), uniform(rng, 4, 3), uniform(rng, 1, 3)},
                            [act](std::vector<Var>& v) { return dense(v[0], v[1], v[2], act); });
    EXPECT_LT(r.max_rel_err, 1e-5);
  }
}

// Property: replaying the same computation yields bit-identical loss and
// gradients.
TEST(Tape, ReplayIsDeterministic) {
  auto run = [] {
    Rng rng(13);
    ParamStore store;
    store.add("w", rng.normal(4, 4));
    const Tensor x = rng.normal(8, 4);
    Tape t;
    const Var loss = mean(square(tanh(matmul(t.constant(x), t.param(store, 0)))));
    t.backward(loss, store);
    return std::pair{t.value(loss)(0, 0), store.grad(0)};
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Tape, InputGradientOnlyForInputs) {
  Tape t;
  const Var c = t.constant(Tensor::scalar(2.0));
  const Var x = t.input(Tensor::scalar(3.0));
  t.backward(mul(c, x));
  EXPECT_EQ(t.grad(x)(0, 0), 2.0);
  EXPECT_FALSE(t.requires_grad(c));
  EXPECT_THROW(t.grad(c), ContractError);
}

}  // namespace
}  // namespace cflow
