// Copyright (c) 2026 The cflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <vector>

#include "cflow/flow.hpp"
#include "cflow/io.hpp"
#include "cflow/objectives.hpp"
#include "cflow/training.hpp"

namespace cflow::digits {

inline constexpr int kPixels = 64;
inline constexpr int kClasses = 10;
inline constexpr int kSide = 8;

struct LoadOptions {
  double train_fraction = 0.8;
  std::uint64_t split_seed = 0;
  /// Seed of the U[0, 1/16) dequantisation noise; disabled when dequantize is false.
  std::uint64_t noise_seed = 1;
  bool dequantize = true;
};

struct Dataset {
  Tensor train_x;  ///< n×64, pixels / 16 plus dequantisation noise
  Tensor train_y;  ///< n×10 one-hot
  std::vector<int> train_labels;
  Tensor test_x;
  Tensor test_y;
  std::vector<int> test_labels;
  std::uint64_t split_seed = 0;
};

/// Reads lines of 64 integer pixels in [0, 16] followed by an integer label
/// in [0, 9], comma separated. Throws ParseError (line number) for malformed
/// lines and DataError for out-of-range values.
Dataset parse_digits(std::istream& in, const LoadOptions& opts = {});
Dataset load_digits(const std::filesystem::path& path, const LoadOptions& opts = {});

struct Config {
  DimPlan dims{kPixels, 0, kClasses, kPixels - kClasses};
  FlowArch arch{8, 256, 2.0, true, 0};
  int epochs = 30;
  int batch_size = 256;
  double lr = 0.001;
  CondNLLConfig cond{0.1, 0.0};
  std::uint64_t seed = 0;
};

struct EpochRecord {
  int epoch = 0;  ///< 1-based
  double train_nll = 0.0;
  double test_accuracy = 0.0;
};

struct TrainResult {
  FlowModel model;
  AdamState optimizer;
  TrainConfig train_config;
  Rng rng;
  double initial_test_accuracy = 0.0;
  std::vector<EpochRecord> epochs;
};

/// Trains the conditional likelihood on the training split, recording the
/// mean train NLL and the forward-process test accuracy after every epoch.
TrainResult train_digits(const Config& cfg, const Dataset& data,
                         const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Argmax of the condition part of the forward pass.
std::vector<int> classify_digits(const FlowModel& model, const Tensor& x);
double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth);

/// n samples conditioned on class k, clamped to [0, 1]; n×64.
Tensor sample_digits(const FlowModel& model, int k, int n, const CondNLLConfig& cfg, Rng& rng,
                     VMode v_mode = VMode::sampled);

/// rows = classes, cols = samples per class.
GrayImage sample_grid(const std::vector<Tensor>& per_class);
/// Row r uses one fixed z for all ten classes; cols = classes.
GrayImage style_grid(const FlowModel& model, int styles, Rng& rng);

}  // namespace cflow::digits
