// Copyright (c) 2026 The cflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "cflow/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "cflow/errors.hpp"

namespace cflow::gmm {

Tensor GMMSpec::means() const {
  Tensor m(kComponents, 2);
  for (int k = 0; k < kComponents; ++k) {
    const double a = 2.0 * std::numbers::pi * k / kComponents;
    m(k, 0) = radius * std::cos(a);
    m(k, 1) = radius * std::sin(a);
  }
  return m;
}

void GMMSpec::validate() const {
  if (!(radius > 0.0)) throw DomainError("mixture radius must be positive");
  if (!(component_std > 0.0)) throw DomainError("mixture component std must be positive");
}

GMMSpec checked_spec(double radius, double component_std, std::uint64_t seed, int n) {
  GMMSpec spec{radius, component_std};
  spec.validate();
  Rng rng(seed);
  const double acc = bayes_accuracy(spec, n, rng);
  if (acc < 0.99) {
    throw DomainError("mixture is too overlapping: Bayes accuracy " + std::to_string(acc) + " < 0.99");
  }
  return spec;
}

GMMDataset sample_gmm(const GMMSpec& spec, int n, Rng& rng) {
  const Tensor mu = spec.means();
  GMMDataset d{Tensor(n, 2), Tensor(n, kComponents), std::vector<int>(static_cast<std::size_t>(n))};
  for (int i = 0; i < n; ++i) {
    const int k = static_cast<int>(rng.uniform_index(kComponents));
    d.labels[static_cast<std::size_t>(i)] = k;
    d.x(i, 0) = mu(k, 0) + spec.component_std * rng.normal();
    d.x(i, 1) = mu(k, 1) + spec.component_std * rng.normal();
    d.y(i, k) = 1.0;
  }
  return d;
}

Tensor sample_component(const GMMSpec& spec, int k, int n, Rng& rng) {
  const Tensor mu = spec.means();
  Tensor x(n, 2);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = mu(k, 0) + spec.component_std * rng.normal();
    x(i, 1) = mu(k, 1) + spec.component_std * rng.normal();
  }
  return x;
}

BayesResult bayes_assign(const GMMSpec& spec, double x1, double x2) {
  const Tensor mu = spec.means();
  const double inv2s2 = 0.5 / (spec.component_std * spec.component_std);
  std::array<double, kComponents> logp{};
  for (int k = 0; k < kComponents; ++k) {
    const double dx = x1 - mu(k, 0);
    const double dy = x2 - mu(k, 1);
    logp[k] = -(dx * dx + dy * dy) * inv2s2;
  }
  const double top = *std::max_element(logp.begin(), logp.end());
  BayesResult r;
  double total = 0.0;
  for (int k = 0; k < kComponents; ++k) {
    r.posterior[k] = std::exp(logp[k] - top);
    total += r.posterior[k];
  }
  for (double& p : r.posterior) p /= total;
  r.label = static_cast<int>(std::max_element(r.posterior.begin(), r.posterior.end()) - r.posterior.begin());
  return r;
}

int nearest_mean(const GMMSpec& spec, double x1, double x2) {
  const Tensor mu = spec.means();
  int best = 0;
  double best_d = INFINITY;
  for (int k = 0; k < kComponents; ++k) {
    const double d = std::hypot(x1 - mu(k, 0), x2 - mu(k, 1));
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

double bayes_accuracy(const GMMSpec& spec, int n, Rng& rng) {
  const GMMDataset d = sample_gmm(spec, n, rng);
  int hits = 0;
  for (int i = 0; i < n; ++i) hits += bayes_assign(spec, d.x(i, 0), d.x(i, 1)).label == d.labels[i];
  return static_cast<double>(hits) / n;
}

Batch GMMSource::next(int batch_size, Rng& rng) {
  GMMDataset d = sample_gmm(spec_, batch_size, rng);
  return {std::move(d.x), std::move(d.y)};
}

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::cond_nll: return "cond_nll";
    case Variant::inn_full: return "inn_full";
    case Variant::inn_forward_only: return "inn_forward_only";
    case Variant::inn_ramp_variant: return "inn_ramp_variant";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : kAllVariants) {
    if (variant_name(v) == name) return v;
  }
  throw DomainError("unknown objective '" + std::string(name) +
                    "' (expected cond_nll, inn_full, inn_forward_only or inn_ramp_variant)");
}

INNWeights default_inn_weights() {
  INNWeights w;
  w.w_y = 3.0;
  w.w_z = 50.0;
  w.w_x1 = 0.15;
  w.w_x2 = 50.0;
  w.ramp = {0, 200, 1.0, 1.0};
  return w;
}

ExperimentConfig default_experiment() {
  ExperimentConfig cfg;
  cfg.train.iterations = 400;
  cfg.train.batch_size = 1600;
  cfg.train.lr = 0.001;
  cfg.train.cond = {0.1, 0.05};
  cfg.train.inn.sigma_pad = 0.05;
  cfg.train.inn.weights = default_inn_weights();
  return cfg;
}

TrainConfig variant_train_config(const ExperimentConfig& cfg) {
  TrainConfig t = cfg.train;
  t.seed = cfg.seed;
  switch (cfg.variant) {
    case Variant::cond_nll:
      t.objective = ObjectiveKind::cond_nll;
      break;
    case Variant::inn_full:
      t.objective = ObjectiveKind::inn;
      break;
    case Variant::inn_forward_only:
      t.objective = ObjectiveKind::inn;
      t.inn.weights.w_x1 = 0.0;
      t.inn.weights.w_x2 = 0.0;
      break;
    case Variant::inn_ramp_variant:
      t.objective = ObjectiveKind::inn;
      t.inn.weights.ramp.speed *= cfg.ramp_variant_speed;
      break;
  }
  return t;
}

double Metrics::mean_fidelity() const {
  return fidelity.empty() ? 0.0 : std::accumulate(fidelity.begin(), fidelity.end(), 0.0) / fidelity.size();
}

double Metrics::min_fidelity() const {
  return fidelity.empty() ? 0.0 : *std::min_element(fidelity.begin(), fidelity.end());
}

double Metrics::mean_mmd() const {
  return class_mmd.empty() ? 0.0 : std::accumulate(class_mmd.begin(), class_mmd.end(), 0.0) / class_mmd.size();
}

RunResult run_experiment(const ExperimentConfig& cfg, const TrainHooks& hooks) {
  cfg.spec.validate();
  if (cfg.dims.x_dim != 2 || cfg.dims.cond_dim != kComponents) {
    throw DimensionError("mixture experiment needs x_dim = 2 and cond_dim = 8");
  }
  FlowArch arch = cfg.arch;
  arch.seed = cfg.seed;

  RunResult run{.metrics = {},
                .history = {},
                .model = FlowModel(cfg.dims, arch),
                .optimizer = {},
                .train_config = variant_train_config(cfg),
                .rng = Rng(Rng::derive_seed(cfg.seed, 2)),
                .test_x = {},
                .test_labels = {},
                .predicted = {},
                .samples = {}};

  GMMSource source(cfg.spec);
  run.history = train(run.model, source, run.train_config, run.optimizer, run.rng, hooks);

  // Held-out forward classification.
  Rng eval_rng(Rng::derive_seed(cfg.seed, 3));
  GMMDataset test = sample_gmm(cfg.spec, cfg.test_points, eval_rng);
  const Tensor c_hat = infer_condition(run.model, test.x, run.train_config.cond, PadMode::sampled, eval_rng);
  run.predicted = argmax_rows(c_hat);
  int hits = 0;
  for (std::size_t i = 0; i < run.predicted.size(); ++i) hits += run.predicted[i] == test.labels[i];
  run.metrics.forward_accuracy = static_cast<double>(hits) / std::max(1, cfg.test_points);
  run.test_x = std::move(test.x);
  run.test_labels = std::move(test.labels);

  // Conditional generation per class.
  Rng sample_rng(Rng::derive_seed(cfg.seed, 4));
  const auto& d = cfg.dims;
  const int n = cfg.samples_per_class;
  double resid_sum = 0.0;
  double resid_max = 0.0;
  long agree = 0;
  for (int k = 0; k < kComponents; ++k) {
    const Tensor z = sample_rng.normal(n, d.dummy_dim);
    Tensor c(n, d.cond_dim);
    c.matrix().col(k).setOnes();
    if (cfg.sample_mode == VMode::sampled) {
      c.matrix() += sample_rng.normal(n, d.cond_dim, run.train_config.cond.epsilon).matrix();
    }
    const Tensor full = run.model.inverse_values(c, z);
    Tensor xs(Matrix(full.matrix().leftCols(d.x_dim)));

    int correct = 0;
    for (int i = 0; i < n; ++i) {
      const int bayes = bayes_assign(cfg.spec, xs(i, 0), xs(i, 1)).label;
      correct += bayes == k;
      agree += bayes == nearest_mean(cfg.spec, xs(i, 0), xs(i, 1));
      if (d.pad > 0) {
        const double r = full.matrix().row(i).tail(d.pad).norm();
        resid_sum += r;
        resid_max = std::max(resid_max, r);
      }
    }
    run.metrics.fidelity.push_back(static_cast<double>(correct) / n);

    const Tensor truth = sample_component(cfg.spec, k, n, sample_rng);
    run.metrics.class_mmd.push_back(n >= 2 && xs.all_finite() ? mmd(xs, truth, MMDConfig{}) : NAN);
    run.samples.push_back(std::move(xs));
  }
  run.metrics.nearest_mean_agreement = static_cast<double>(agree) / (static_cast<double>(n) * kComponents);
  run.metrics.x0_residual_mean = resid_sum / (static_cast<double>(n) * kComponents);
  run.metrics.x0_residual_max = resid_max;
  return run;
}

std::vector<std::string> metrics_header() {
  std::vector<std::string> h = {"variant",          "seed",           "forward_accuracy", "mean_fidelity",
                                "min_fidelity",     "mean_mmd",       "nearest_mean_agreement",
                                "x0_residual_mean", "x0_residual_max"};
  for (int k = 0; k < kComponents; ++k) h.push_back("fidelity_" + std::to_string(k));
  for (int k = 0; k < kComponents; ++k) h.push_back("mmd_" + std::to_string(k));
  return h;
}

void write_metrics_row(CsvWriter& csv, const ExperimentConfig& cfg, const Metrics& m) {
  csv.cell(std::string(variant_name(cfg.variant)))
      .cell(static_cast<long long>(cfg.seed))
      .cell(m.forward_accuracy)
      .cell(m.mean_fidelity())
      .cell(m.min_fidelity())
      .cell(m.mean_mmd())
      .cell(m.nearest_mean_agreement)
      .cell(m.x0_residual_mean)
      .cell(m.x0_residual_max);
  for (double f : m.fidelity) csv.cell(f);
  for (double v : m.class_mmd) csv.cell(v);
  csv.end_row();
}

void write_train_curve(const TrainHistory& history, const std::filesystem::path& path) {
  std::vector<std::string> header = {"iter", "total"};
  if (!history.records.empty()) {
    for (const auto& t : history.records.front().report.terms) header.push_back(t.name);
  }
  CsvWriter csv(path, header);
  for (const auto& rec : history.records) {
    csv.cell(rec.iteration).cell(rec.report.total);
    for (const auto& t : rec.report.terms) csv.cell(t.value);
    csv.end_row();
  }
}

void write_artifacts(const RunResult& run, const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    CsvWriter csv(dir / "metrics.csv", metrics_header());
    write_metrics_row(csv, cfg, run.metrics);
  }
  write_train_curve(run.history, dir / "train_curve.csv");

  Tensor all(static_cast<Eigen::Index>(run.samples.size()) * cfg.samples_per_class, 2);
  std::vector<int> classes;
  for (std::size_t k = 0; k < run.samples.size(); ++k) {
    const Tensor& s = run.samples[k];
    CsvWriter csv(dir / ("samples_class_" + std::to_string(k) + ".csv"), {"x1", "x2"});
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      csv.cell(s(i, 0)).cell(s(i, 1));
      csv.end_row();
    }
    all.matrix().middleRows(static_cast<Eigen::Index>(k) * s.rows(), s.rows()) = s.matrix();
    classes.insert(classes.end(), static_cast<std::size_t>(s.rows()), static_cast<int>(k));
  }
  emit_scatter_svg(run.test_x, run.predicted, dir / "forward_labels.svg", "predicted labels of held-out points");
  emit_scatter_svg(all, classes, dir / "posterior_samples.svg", "conditional samples per label");
  save_checkpoint(dir / "checkpoint.final", run.model, run.optimizer, run.train_config, run.rng);
}

}  // namespace cflow::gmm
