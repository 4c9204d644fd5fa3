// Copyright (c) 2026 The cflow Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cflow/errors.hpp"
#include "cflow/gmm.hpp"
#include "cflow/training.hpp"

namespace cflow {
namespace {

namespace fs = std::filesystem;

fs::path temp_path(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "cflow_training_test";
  fs::create_directories(dir);
  return dir / name;
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  ParamStore store;
  store.add("w", Tensor::from_rows({{1.0, -2.0}, {0.5, 3.0}}));
  const Tensor before = store.value(0);
  AdamState state;
  for (int i = 0; i < 5; ++i) adam_step(store, state);
  EXPECT_EQ(store.value(0), before);
  EXPECT_EQ(state.t, 5);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamStore store;
  store.add("w", Tensor::scalar(0.0));
  store.grad(0)(0, 0) = 1.0;
  AdamState state;
  adam_step(store, state);
  EXPECT_NEAR(store.value(0).item(), -state.lr / (1.0 + state.eps_hat), 1e-15);
  EXPECT_EQ(store.grad(0).item(), 0.0);
}

TEST(Adam, QuadraticBowlConverges) {
  ParamStore store;
  store.add("theta", Tensor::scalar(1.0));
  AdamState state;
  state.lr = 0.1;
  for (int i = 0; i < 200; ++i) {
    store.grad(0)(0, 0) = 2.0 * store.value(0).item();
    adam_step(store, state);
  }
  EXPECT_LT(std::abs(store.value(0).item()), 1e-2);
}

TEST(Adam, MomentShapesMirrorParameters) {
  ParamStore store;
  store.add("a", Tensor(2, 3));
  store.add("b", Tensor(1, 4));
  AdamState state;
  adam_step(store, state);
  ASSERT_EQ(state.m.size(), 2u);
  EXPECT_EQ(state.m[1].cols(), 4);
  EXPECT_EQ(state.v[0].rows(), 2);
}

// Property: with a constant gradient the per-coordinate step tends to lr.
TEST(AdamProperty, ConstantGradientStepTendsToLearningRate) {
  for (double g : {-3.0, 0.01, 250.0}) {
    ParamStore store;
    store.add("w", Tensor::scalar(0.0));
    AdamState state;
    double prev = 0.0;
    double step = 0.0;
    for (int i = 0; i < 5000; ++i) {
      store.grad(0)(0, 0) = g;
      adam_step(store, state);
      step = std::abs(store.value(0).item() - prev);
      prev = store.value(0).item();
    }
    EXPECT_NEAR(step, state.lr, 1e-3 * state.lr) << "g = " << g;
  }
}

TEST(ClipGradNorm, ScalesDownOnly) {
  ParamStore store;
  store.add("w", Tensor(1, 2));
  store.grad(0) = Tensor::from_rows({{3.0, 4.0}});
  clip_grad_norm(store, 10.0);
  EXPECT_EQ(store.grad(0), Tensor::from_rows({{3.0, 4.0}}));
  clip_grad_norm(store, 1.0);
  EXPECT_NEAR(store.grad_norm(), 1.0, 1e-15);
}

TEST(DatasetSource, EpochCoversEveryRowOnce) {
  Tensor x(10, 1);
  for (int i = 0; i < 10; ++i) x(i, 0) = i;
  DatasetSource src(x, Tensor(10, 1));
  EXPECT_EQ(src.batches_per_epoch(4), 3);
  EXPECT_EQ(src.batches_per_epoch(3), 3);  // trailing single row is dropped
  Rng rng(1);
  std::vector<int> seen;
  for (int b = 0; b < 3; ++b) {
    const auto batch = src.next(4, rng);
    for (Eigen::Index i = 0; i < batch.x.rows(); ++i) seen.push_back(static_cast<int>(batch.x(i, 0)));
  }
  std::sort(seen.begin(), seen.end());
  EXPECT_EQ(seen, (std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}));
}

TEST(DatasetSource, RejectsMismatchedRows) { EXPECT_THROW(DatasetSource(Tensor(3, 1), Tensor(4, 1)), DimensionError); }

struct SmallRun {
  FlowModel model{DimPlan{2, 8, 8, 2}, FlowArch{2, 16, 2.0, true, 3}};
  TrainConfig cfg;
  AdamState state;
  Rng rng{7};

  SmallRun() {
    cfg.iterations = 5;
    cfg.batch_size = 64;
  }
};

TEST(Train, ZeroIterationsIsNoOp) {
  SmallRun run;
  run.cfg.iterations = 0;
  const std::string before = checkpoint_to_string(run.model, run.state, run.cfg, run.rng);
  gmm::GMMSource src(gmm::GMMSpec{});
  const auto history = train(run.model, src, run.cfg, run.state, run.rng);
  EXPECT_TRUE(history.records.empty());
  EXPECT_EQ(checkpoint_to_string(run.model, run.state, run.cfg, run.rng), before);
}

TEST(Train, SameSeedGivesBitIdenticalParameters) {
  for (ObjectiveKind kind : {ObjectiveKind::cond_nll, ObjectiveKind::inn}) {
    auto go = [kind] {
      SmallRun run;
      run.cfg.objective = kind;
      gmm::GMMSource src(gmm::GMMSpec{});
      train(run.model, src, run.cfg, run.state, run.rng);
      return checkpoint_to_string(run.model, run.state, run.cfg, run.rng);
    };
    EXPECT_EQ(go(), go());
  }
}

TEST(Train, HistoryAndHooks) {
  SmallRun run;
  gmm::GMMSource src(gmm::GMMSpec{});
  int calls = 0;
  TrainHooks hooks;
  hooks.on_iteration = [&](int it, const LossReport& r) {
    EXPECT_EQ(it, calls++);
    EXPECT_TRUE(std::isfinite(r.total));
  };
  const auto history = train(run.model, src, run.cfg, run.state, run.rng, hooks);
  EXPECT_EQ(calls, 5);
  ASSERT_EQ(history.records.size(), 5u);
  EXPECT_EQ(history.records.back().iteration, 4);
  EXPECT_EQ(run.state.t, 5);
}

TEST(Train, RejectsInvalidConfig) {
  SmallRun run;
  gmm::GMMSource src(gmm::GMMSpec{});
  run.cfg.batch_size = 1;
  EXPECT_THROW(train(run.model, src, run.cfg, run.state, run.rng), DomainError);
}

class PoisonedSource : public BatchSource {
 public:
  explicit PoisonedSource(int poison_at) : poison_at_(poison_at) {}
  Batch next(int batch_size, Rng& rng) override {
    auto b = inner_.next(batch_size, rng);
    if (calls_++ == poison_at_) b.x(0, 0) = std::numeric_limits<double>::quiet_NaN();
    return b;
  }

 private:
  gmm::GMMSource inner_{gmm::GMMSpec{}};
  int poison_at_;
  int calls_ = 0;
};

TEST(Train, NonFiniteLossAbortsWithLoadableCheckpoint) {
  SmallRun run;
  run.cfg.iterations = 10;
  PoisonedSource src(3);
  TrainHooks hooks;
  hooks.checkpoint_path = temp_path("diverged.ckpt");
  fs::remove(hooks.checkpoint_path);
  try {
    train(run.model, src, run.cfg, run.state, run.rng, hooks);
    FAIL() << "expected TrainingDiverged";
  } catch (const TrainingDiverged& e) {
    EXPECT_EQ(e.iteration(), 3);
    EXPECT_EQ(e.history().records.size(), 3u);
    EXPECT_EQ(e.checkpoint(), hooks.checkpoint_path.string());
    EXPECT_FALSE(e.term().empty());
  }
  const Checkpoint ck = load_checkpoint(hooks.checkpoint_path);
  EXPECT_EQ(ck.optimizer.t, 3);
  for (ParamId id = 0; id < ck.model.params().size(); ++id) {
    EXPECT_TRUE(ck.model.params().value(id).all_finite());
    EXPECT_EQ(ck.model.params().value(id), run.model.params().value(id));
  }
}

TEST(Checkpoint, RoundTripReproducesForwardExactly) {
  SmallRun run;
  gmm::GMMSource src(gmm::GMMSpec{});
  train(run.model, src, run.cfg, run.state, run.rng);
  const auto path = temp_path("roundtrip.ckpt");
  save_checkpoint(path, run.model, run.state, run.cfg, run.rng);
  const Checkpoint ck = load_checkpoint(path);

  Rng probe_rng(99);
  const Tensor probe = probe_rng.normal(32, 10);
  const auto a = run.model.forward_values(probe);
  const auto b = ck.model.forward_values(probe);
  EXPECT_EQ(a.c_hat, b.c_hat);
  EXPECT_EQ(a.z, b.z);
  EXPECT_EQ(a.logdet, b.logdet);

  EXPECT_EQ(ck.model.dims(), run.model.dims());
  for (std::size_t i = 0; i < run.model.permutations().size(); ++i) {
    EXPECT_EQ(ck.model.permutations()[i].indices(), run.model.permutations()[i].indices());
  }
  EXPECT_EQ(ck.optimizer.t, run.state.t);
  ASSERT_EQ(ck.optimizer.m.size(), run.state.m.size());
  for (std::size_t i = 0; i < run.state.m.size(); ++i) {
    EXPECT_EQ(ck.optimizer.m[i], run.state.m[i]);
    EXPECT_EQ(ck.optimizer.v[i], run.state.v[i]);
  }
  EXPECT_EQ(ck.config.batch_size, 64);
  Rng restored;
  restored.set_state(ck.rng_state);
  EXPECT_EQ(restored.normal(), run.rng.normal());
  EXPECT_EQ(checkpoint_to_string(ck.model, ck.optimizer, ck.config, restored),
            checkpoint_to_string(run.model, run.state, run.cfg, run.rng));
}

TEST(Checkpoint, ResumedTrainingMatchesUninterrupted) {
  SmallRun straight;
  straight.cfg.iterations = 6;
  gmm::GMMSource src(gmm::GMMSpec{});
  train(straight.model, src, straight.cfg, straight.state, straight.rng);

  SmallRun first;
  first.cfg.iterations = 3;
  train(first.model, src, first.cfg, first.state, first.rng);
  Checkpoint ck = checkpoint_from_string(checkpoint_to_string(first.model, first.state, first.cfg, first.rng));
  Rng rng;
  rng.set_state(ck.rng_state);
  train(ck.model, src, ck.config, ck.optimizer, rng);
  for (ParamId id = 0; id < ck.model.params().size(); ++id) {
    EXPECT_EQ(ck.model.params().value(id), straight.model.params().value(id));
  }
}

TEST(Checkpoint, IdentityModelHasZeroLogdetAfterLoad) {
  SmallRun run;
  const Checkpoint ck = checkpoint_from_string(checkpoint_to_string(run.model, run.state, run.cfg, run.rng));
  Rng probe_rng(5);
  EXPECT_EQ(ck.model.forward_values(probe_rng.normal(16, 10)).logdet.matrix(), Matrix::Zero(16, 1));
}

TEST(Checkpoint, TruncatedFileIsParseErrorWithOffset) {
  SmallRun run;
  const std::string text = checkpoint_to_string(run.model, run.state, run.cfg, run.rng);
  const auto path = temp_path("truncated.ckpt");
  {
    std::ofstream out(path, std::ios::binary);
    out << text.substr(0, text.size() / 2);
  }
  try {
    load_checkpoint(path);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.unit(), ParseError::Unit::byte);
    EXPECT_GE(e.position(), text.size() / 2);
  }
}

TEST(Checkpoint, VersionMismatchIsRejected) {
  SmallRun run;
  std::string text = checkpoint_to_string(run.model, run.state, run.cfg, run.rng);
  const std::string key = "\"version\": " + std::to_string(kCheckpointVersion);
  const auto pos = text.find(key);
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, key.size(), "\"version\": 99");
  EXPECT_THROW(checkpoint_from_string(text), VersionError);
}

TEST(Checkpoint, ArraysUseSeventeenSignificantDigits) {
  SmallRun run;
  run.model.params().value(0)(0, 0) = 0.1;
  const std::string text = checkpoint_to_string(run.model, run.state, run.cfg, run.rng);
  EXPECT_NE(text.find("0.10000000000000001"), std::string::npos);
}

TEST(Checkpoint, ForeignDocumentIsDataError) {
  EXPECT_THROW(checkpoint_from_string("{\"format\": \"other\"}"), DataError);
  EXPECT_THROW(load_checkpoint(temp_path("does_not_exist.ckpt")), Error);
}

}  // namespace
}  // namespace cflow
