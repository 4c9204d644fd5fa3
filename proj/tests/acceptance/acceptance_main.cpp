// Copyright (c) 2026 The cflow Authors
// SPDX-License-Identifier: Apache-2.0

// Runs the end-to-end acceptance criteria and prints one PASS/FAIL line per
// criterion. `--only 4,7` restricts the run; `--out DIR` keeps run artifacts.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cflow/digits.hpp"
#include "cflow/errors.hpp"
#include "cflow/gmm.hpp"
#include "cflow/gradcheck.hpp"
#include "cflow/objectives.hpp"
#include "cflow/training.hpp"

namespace {

using namespace cflow;
namespace fs = std::filesystem;

// Subnet width used for the five-seed ablation; the single full-size run is
// criterion 4.
constexpr int kAblationHidden = 128;
constexpr int kAblationSeeds = 5;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome(const fs::path&)> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome gradient_correctness(const fs::path&) {
  const auto t0 = std::chrono::steady_clock::now();
  FlowCheckOptions opts;
  opts.width = 10;
  opts.blocks = 8;
  const FlowCheckReport r = check_flow(opts);
  const double secs = seconds_since(t0);
  return {r.pass() && secs < 60.0, fmt("grad rel-err %.2e (< 1e-5), logdet rel-err %.2e (< 1e-3), %.1f s (< 60 s)",
                                       r.grad.max_rel_err, r.logdet_max_rel_err, secs)};
}

Outcome invertibility(const fs::path&) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int width = 4 + static_cast<int>(rng.uniform_index(7));
    const int blocks = 1 + static_cast<int>(rng.uniform_index(8));
    const int x_dim = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(width)));
    const int cond = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(width - 1)));
    const DimPlan dims{x_dim, width - x_dim, cond, width - cond};
    FlowModel model(dims, FlowArch{blocks, 32, 2.0, true, static_cast<std::uint64_t>(trial)});
    // Output-layer gain 0.5: at gain 1 eight saturated blocks can stretch a
    // unit input past 1e5, and roundoff then dominates the comparison.
    model.randomize(rng, 0.5);
    const Tensor x = rng.normal(64, width);
    const FlowValues fv = model.forward_values(x);
    const Tensor back = model.inverse_values(fv.c_hat, fv.z);
    worst = std::max(worst, (back.matrix() - x.matrix()).cwiseAbs().maxCoeff());
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-8 && secs < 60.0,
          fmt("max |f^-1(f(x)) - x| = %.2e (< 1e-8) over 100 flows (subnet output gain 0.5), %.1f s (< 60 s)", worst, secs)};
}

Outcome density_normalization(const fs::path&) {
  FlowModel m(DimPlan{2, 0, 1, 1}, FlowArch{8, 64, 2.0, true, 77});
  Rng rng(78);
  m.randomize(rng, 0.5);
  const double step = 0.05;
  const int n = static_cast<int>(std::lround(16.0 / step)) + 1;
  Tensor grid(static_cast<Eigen::Index>(n) * n, 2);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      grid(i * n + j, 0) = -8.0 + i * step;
      grid(i * n + j, 1) = -8.0 + j * step;
    }
  }
  const double mass = log_density(m, grid).matrix().array().exp().sum() * step * step;
  return {std::abs(mass - 1.0) <= 0.02, fmt("integral %.5f (1 +/- 0.02)", mass)};
}

void keep_gmm_artifacts(const gmm::RunResult& run, const gmm::ExperimentConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  CsvWriter csv(dir / "metrics.csv", gmm::metrics_header());
  gmm::write_metrics_row(csv, cfg, run.metrics);
  gmm::write_train_curve(run.history, dir / "train_curve.csv");
}

Outcome gmm_experiment(const fs::path& out) {
  const auto t0 = std::chrono::steady_clock::now();
  gmm::ExperimentConfig cfg = gmm::default_experiment();
  const gmm::RunResult run = gmm::run_experiment(cfg);
  const double secs = seconds_since(t0);
  if (!out.empty()) keep_gmm_artifacts(run, cfg, out / "gmm");

  const auto& h = run.history.records;
  const double early = h.size() > 10 ? h[10].report.total : NAN;
  double late = 0.0;
  const std::size_t tail = std::min<std::size_t>(50, h.size());
  for (std::size_t i = h.size() - tail; i < h.size(); ++i) late += h[i].report.total / static_cast<double>(tail);

  const bool pass = run.metrics.forward_accuracy >= 0.95 && run.metrics.min_fidelity() >= 0.95;
  return {pass, fmt("forward accuracy %.4f (>= 0.95), per-class fidelity min %.4f mean %.4f (>= 0.95); "
                    "nll iter 10 %.3f -> last-50 mean %.3f; %.0f s (target < 600 s)",
                    run.metrics.forward_accuracy, run.metrics.min_fidelity(), run.metrics.mean_fidelity(), early, late,
                    secs)};
}

Outcome ablation_direction(const fs::path& out) {
  const auto t0 = std::chrono::steady_clock::now();
  int nll_ge_fwd = 0;
  int fwd_lt_full = 0;
  std::ostringstream per_seed;
  std::unique_ptr<CsvWriter> csv;
  if (!out.empty()) {
    fs::create_directories(out / "ablation");
    csv = std::make_unique<CsvWriter>(out / "ablation" / "comparison.csv", gmm::metrics_header());
  }
  for (std::uint64_t seed = 0; seed < kAblationSeeds; ++seed) {
    double fid[3];
    const gmm::Variant variants[3] = {gmm::Variant::cond_nll, gmm::Variant::inn_forward_only, gmm::Variant::inn_full};
    for (int v = 0; v < 3; ++v) {
      gmm::ExperimentConfig cfg = gmm::default_experiment();
      cfg.arch.hidden = kAblationHidden;
      cfg.seed = seed;
      cfg.variant = variants[v];
      const gmm::RunResult run = gmm::run_experiment(cfg);
      fid[v] = run.metrics.mean_fidelity();
      if (csv) gmm::write_metrics_row(*csv, cfg, run.metrics);
    }
    nll_ge_fwd += fid[0] >= fid[1];
    fwd_lt_full += fid[1] < fid[2];
    per_seed << fmt(" [seed %d: nll %.3f fwd %.3f full %.3f]", static_cast<int>(seed), fid[0], fid[1], fid[2]);
  }
  const int need = static_cast<int>(std::ceil(0.8 * kAblationSeeds));
  const bool pass = nll_ge_fwd >= need && fwd_lt_full >= need;
  return {pass, fmt("hidden %d: cond_nll >= forward-only on %d/%d, forward-only < full on %d/%d (need %d each); %.0f s",
                    kAblationHidden, nll_ge_fwd, kAblationSeeds, fwd_lt_full, kAblationSeeds, need,
                    seconds_since(t0)) +
                    per_seed.str()};
}

Outcome mmd_sanity(const fs::path&) {
  std::vector<double> same;
  double min_shifted = INFINITY;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(Rng::derive_seed(606, s));
    const Tensor a = rng.normal(500, 2);
    const Tensor b = rng.normal(500, 2);
    same.push_back(std::abs(mmd(a, b, MMDConfig{})));
    Tensor c = rng.normal(500, 2);
    c.matrix().col(0).array() += 5.0;
    min_shifted = std::min(min_shifted, mmd(a, c, MMDConfig{}));
  }
  std::sort(same.begin(), same.end());
  const double p95 = same[18];  // nearest-rank 95th percentile of 20
  return {p95 < 0.02 && min_shifted > 0.5,
          fmt("same-distribution p95 %.5f (< 0.02), shifted minimum %.4f (> 0.5)", p95, min_shifted)};
}

Outcome digits_benchmark(const fs::path& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const digits::Dataset data = digits::load_digits(std::string(CFLOW_DATA_DIR) + "/digits.csv");
  const digits::Config cfg;
  const digits::TrainResult r = digits::train_digits(cfg, data);
  const double acc = r.epochs.back().test_accuracy;

  Rng rng(Rng::derive_seed(cfg.seed, 5));
  constexpr int kPerClass = 100;
  int hits = 0;
  double worst_class = 1.0;
  std::vector<Tensor> grid;
  for (int k = 0; k < digits::kClasses; ++k) {
    const Tensor s = digits::sample_digits(r.model, k, kPerClass, cfg.cond, rng);
    int h = 0;
    for (int p : digits::classify_digits(r.model, s)) h += p == k;
    hits += h;
    worst_class = std::min(worst_class, h / static_cast<double>(kPerClass));
    grid.push_back(Tensor(Matrix(s.matrix().topRows(20))));
  }
  const double recls = hits / static_cast<double>(kPerClass * digits::kClasses);
  if (!out.empty()) {
    fs::create_directories(out / "digits");
    write_pgm(out / "digits" / "samples_grid.pgm", digits::sample_grid(grid));
  }
  return {acc >= 0.90 && recls >= 0.85,
          fmt("test accuracy %.4f (>= 0.90), re-classification %.4f (>= 0.85, worst class %.2f); %.0f s (target < 900 s)",
              acc, recls, worst_class, seconds_since(t0))};
}

Outcome determinism_persistence(const fs::path&) {
  bool identical = true;
  bool round_trip = true;
  for (ObjectiveKind kind : {ObjectiveKind::cond_nll, ObjectiveKind::inn}) {
    auto train_once = [kind] {
      gmm::ExperimentConfig cfg = gmm::default_experiment();
      FlowModel model(cfg.dims, FlowArch{8, 32, 2.0, true, 11});
      TrainConfig tc = cfg.train;
      tc.objective = kind;
      tc.iterations = 20;
      tc.batch_size = 200;
      AdamState adam;
      Rng rng(12);
      gmm::GMMSource src(cfg.spec);
      train(model, src, tc, adam, rng);
      return checkpoint_to_string(model, adam, tc, rng);
    };
    const std::string a = train_once();
    identical = identical && a == train_once();

    const fs::path path = fs::temp_directory_path() / "cflow_acceptance_roundtrip.ckpt";
    const Checkpoint ck = checkpoint_from_string(a);
    save_checkpoint(path, ck.model, ck.optimizer, ck.config, Rng(0));
    const Checkpoint back = load_checkpoint(path);
    Rng probe(13);
    const Tensor x = probe.normal(257, 10);
    const FlowValues f1 = ck.model.forward_values(x);
    const FlowValues f2 = back.model.forward_values(x);
    round_trip = round_trip && f1.c_hat == f2.c_hat && f1.z == f2.z && f1.logdet == f2.logdet;
    for (ParamId id = 0; id < ck.model.params().size(); ++id) {
      round_trip = round_trip && ck.model.params().value(id) == back.model.params().value(id);
    }
    fs::remove(path);
  }
  return {identical && round_trip,
          fmt("same seed -> identical checkpoints: %s; save/load forward outputs bit-identical: %s",
              identical ? "yes" : "no", round_trip ? "yes" : "no")};
}

Outcome loss_report_consistency(const fs::path&) {
  Rng rng(909);
  double worst = 0.0;
  int evaluations = 0;
  for (int e = 0; e < 1000; ++e) {
    const int x_dim = 1 + static_cast<int>(rng.uniform_index(3));
    const int cond = 1 + static_cast<int>(rng.uniform_index(4));
    const int dummy = 1 + static_cast<int>(rng.uniform_index(3));
    const int width = std::max(x_dim, cond + dummy);
    const DimPlan dims{x_dim, width - x_dim, cond, width - cond};
    FlowModel model(dims, FlowArch{2, 8, 2.0, true, static_cast<std::uint64_t>(e)});
    model.randomize(rng, 0.3);
    const int n = 8 + static_cast<int>(rng.uniform_index(24));
    const Tensor x = rng.normal(n, x_dim);
    Tensor y(n, cond);
    for (int i = 0; i < n; ++i) y(i, static_cast<Eigen::Index>(rng.uniform_index(cond))) = 1.0;

    Tape tape;
    Objective obj;
    if (e % 2 == 0) {
      obj = cond_nll(model, tape, x, y, CondNLLConfig{0.05 + rng.uniform(), 0.1 * rng.uniform()}, rng);
    } else {
      INNConfig c;
      c.weights = INNWeights{10 * rng.uniform(), 500 * rng.uniform(), 10 * rng.uniform(), 500 * rng.uniform(),
                             RampSchedule{0, 100, rng.uniform(), 1.0}};
      obj = inn_losses(model, tape, x, y, rng.normal(n, dims.dummy_dim), c,
                       static_cast<int>(rng.uniform_index(200)), rng);
    }
    double expected = 0.0;
    for (const auto& t : obj.report.terms) expected += t.weight * t.value;
    worst = std::max(worst, std::abs(obj.report.total - expected));
    worst = std::max(worst, std::abs(obj.report.total - obj.total.value()(0, 0)));
    ++evaluations;
  }
  return {worst <= 1e-12, fmt("max |total - sum(w * term)| = %.2e (<= 1e-12) over %d evaluations", worst, evaluations)};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  fs::path out;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    } else if (arg == "--out" && i + 1 < argc) {
      out = argv[++i];
    } else {
      std::cerr << "usage: cflow_acceptance [--only N[,N...]] [--out DIR]\n";
      return 2;
    }
  }

  const std::vector<Criterion> criteria = {
      {1, "gradient correctness", gradient_correctness},
      {2, "invertibility", invertibility},
      {3, "density normalization", density_normalization},
      {4, "mixture experiment", gmm_experiment},
      {5, "ablation direction", ablation_direction},
      {6, "mmd estimator sanity", mmd_sanity},
      {7, "digits benchmark", digits_benchmark},
      {8, "determinism and persistence", determinism_persistence},
      {9, "loss report consistency", loss_report_consistency},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.contains(c.id)) continue;
    Outcome o;
    try {
      o = c.run(out);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << c.id << " " << c.name << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
