// Copyright (c) 2026 The cflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cflow/flow.hpp"
#include "cflow/io.hpp"
#include "cflow/objectives.hpp"
#include "cflow/rng.hpp"
#include "cflow/training.hpp"

namespace cflow::gmm {

inline constexpr int kComponents = 8;

/// Eight isotropic Gaussians with means equally spaced on a circle and
/// uniform weights. The forward process maps a point to the one-hot label
/// of the component that generated it.
struct GMMSpec {
  double radius = 3.0;
  double component_std = 0.25;

  Tensor means() const;
  /// Throws DomainError for a non-positive std or radius.
  void validate() const;
};

/// Validates the spec and checks by Monte Carlo (n draws) that the Bayes
/// classifier is at least 99% accurate; throws DomainError otherwise.
GMMSpec checked_spec(double radius, double component_std, std::uint64_t seed = 0, int n = 100000);

struct GMMDataset {
  Tensor x;                 ///< n×2
  Tensor y;                 ///< n×8 one-hot
  std::vector<int> labels;  ///< generating component
};

GMMDataset sample_gmm(const GMMSpec& spec, int n, Rng& rng);
/// n draws from component k only.
Tensor sample_component(const GMMSpec& spec, int k, int n, Rng& rng);

struct BayesResult {
  int label = 0;
  std::array<double, kComponents> posterior{};
};

/// Exact posterior over components under a uniform prior.
BayesResult bayes_assign(const GMMSpec& spec, double x1, double x2);
int nearest_mean(const GMMSpec& spec, double x1, double x2);
double bayes_accuracy(const GMMSpec& spec, int n, Rng& rng);

/// Fresh batches from the mixture every iteration.
class GMMSource : public BatchSource {
 public:
  explicit GMMSource(GMMSpec spec) : spec_(spec) {}
  Batch next(int batch_size, Rng& rng) override;

 private:
  GMMSpec spec_;
};

enum class Variant { cond_nll, inn_full, inn_forward_only, inn_ramp_variant };

std::string_view variant_name(Variant v);
/// Throws DomainError for an unknown name.
Variant parse_variant(std::string_view name);
inline constexpr std::array<Variant, 4> kAllVariants = {Variant::cond_nll, Variant::inn_full,
                                                        Variant::inn_forward_only, Variant::inn_ramp_variant};

struct ExperimentConfig {
  GMMSpec spec;
  DimPlan dims{2, 8, 8, 2};
  FlowArch arch{8, 512, 2.0, true, 0};
  TrainConfig train;
  Variant variant = Variant::cond_nll;
  /// Ramp-speed multiplier applied by the inn_ramp_variant objective.
  double ramp_variant_speed = 4.0;
  int test_points = 8000;
  int samples_per_class = 1000;
  VMode sample_mode = VMode::sampled;
  std::uint64_t seed = 0;
};

/// Default INN weights used by the inn_* variants.
INNWeights default_inn_weights();

/// 8 blocks of 3-layer 512-wide subnets, epsilon 0.1, pad noise 0.05,
/// 400 iterations of batch 1600, Adam at lr 0.001.
ExperimentConfig default_experiment();

/// Training configuration after applying the variant's objective and
/// weight changes.
TrainConfig variant_train_config(const ExperimentConfig& cfg);

struct Metrics {
  double forward_accuracy = 0.0;
  std::vector<double> fidelity;   ///< per class, Bayes-assigned
  std::vector<double> class_mmd;  ///< per class, generated vs true
  double nearest_mean_agreement = 0.0;
  double x0_residual_mean = 0.0;
  double x0_residual_max = 0.0;

  double mean_fidelity() const;
  double min_fidelity() const;
  double mean_mmd() const;
};

struct RunResult {
  Metrics metrics;
  TrainHistory history;
  FlowModel model;
  AdamState optimizer;
  TrainConfig train_config;
  Rng rng;
  Tensor test_x;
  std::vector<int> test_labels;
  std::vector<int> predicted;
  std::vector<Tensor> samples;  ///< per class, samples_per_class × 2
};

/// Trains a flow on the mixture with the configured variant, then scores
/// forward classification on fresh test points and conditional samples per
/// class. Divergence surfaces as TrainingDiverged.
RunResult run_experiment(const ExperimentConfig& cfg, const TrainHooks& hooks = {});

std::vector<std::string> metrics_header();
/// Writes one metrics row (after the leading variant,seed cells).
void write_metrics_row(CsvWriter& csv, const ExperimentConfig& cfg, const Metrics& m);

/// metrics.csv, train_curve.csv, samples_class_<k>.csv, forward_labels.svg,
/// posterior_samples.svg, checkpoint.final.
void write_artifacts(const RunResult& run, const ExperimentConfig& cfg, const std::filesystem::path& dir);

void write_train_curve(const TrainHistory& history, const std::filesystem::path& path);

}  // namespace cflow::gmm
