// Copyright (c) 2026 The cflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "cflow/digits.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <string>

#include "cflow/errors.hpp"

namespace cflow::digits {
namespace {

std::vector<long> parse_line(const std::string& line, std::size_t lineno) {
  std::vector<long> fields;
  const char* p = line.data();
  const char* end = p + line.size();
  if (end != p && end[-1] == '\r') --end;
  while (true) {
    long v = 0;
    const auto res = std::from_chars(p, end, v);
    const char* stop = res.ptr;
    if (res.ec != std::errc() || (stop != end && *stop != ',')) {
      throw ParseError("line " + std::to_string(lineno) + ": field " + std::to_string(fields.size() + 1) +
                           " is not an integer",
                       lineno, ParseError::Unit::line);
    }
    fields.push_back(v);
    if (stop == end) break;
    p = stop + 1;
  }
  return fields;
}

}  // namespace

Dataset parse_digits(std::istream& in, const LoadOptions& opts) {
  std::vector<std::array<long, kPixels + 1>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = parse_line(line, lineno);
    if (f.size() != kPixels + 1) {
      throw ParseError("line " + std::to_string(lineno) + ": expected 65 fields, got " + std::to_string(f.size()),
                       lineno, ParseError::Unit::line);
    }
    std::array<long, kPixels + 1> r{};
    for (int j = 0; j < kPixels; ++j) {
      if (f[j] < 0 || f[j] > 16) {
        throw DataError("line " + std::to_string(lineno) + ": pixel value " + std::to_string(f[j]) +
                        " outside [0, 16]");
      }
      r[j] = f[j];
    }
    if (f[kPixels] < 0 || f[kPixels] >= kClasses) {
      throw DataError("line " + std::to_string(lineno) + ": label " + std::to_string(f[kPixels]) +
                      " outside [0, 9]");
    }
    r[kPixels] = f[kPixels];
    rows.push_back(r);
  }
  if (rows.empty()) throw DataError("digits file has no samples");

  const auto n = static_cast<Eigen::Index>(rows.size());
  std::vector<Eigen::Index> order(rows.size());
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng split_rng(opts.split_seed);
  std::shuffle(order.begin(), order.end(), split_rng.engine());
  const auto n_train = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(opts.train_fraction * n + 0.5), 0, n);

  Rng noise(opts.noise_seed);
  Dataset d;
  d.split_seed = opts.split_seed;
  auto fill = [&](Tensor& x, Tensor& y, std::vector<int>& labels, Eigen::Index begin, Eigen::Index count) {
    x = Tensor(count, kPixels);
    y = Tensor(count, kClasses);
    labels.resize(static_cast<std::size_t>(count));
    for (Eigen::Index i = 0; i < count; ++i) {
      const auto& r = rows[static_cast<std::size_t>(order[static_cast<std::size_t>(begin + i)])];
      for (int j = 0; j < kPixels; ++j) {
        x(i, j) = r[j] / 16.0 + (opts.dequantize ? noise.uniform() / 16.0 : 0.0);
      }
      const int label = static_cast<int>(r[kPixels]);
      y(i, label) = 1.0;
      labels[static_cast<std::size_t>(i)] = label;
    }
  };
  fill(d.train_x, d.train_y, d.train_labels, 0, n_train);
  fill(d.test_x, d.test_y, d.test_labels, n_train, n - n_train);
  return d;
}

Dataset load_digits(const std::filesystem::path& path, const LoadOptions& opts) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open digits file: " + path.string());
  return parse_digits(in, opts);
}

std::vector<int> classify_digits(const FlowModel& model, const Tensor& x) {
  Rng unused(0);
  return argmax_rows(infer_condition(model, x, CondNLLConfig{}, PadMode::zeros, unused));
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size()) throw DimensionError("accuracy: length mismatch");
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

TrainResult train_digits(const Config& cfg, const Dataset& data, const std::function<void(const EpochRecord&)>& on_epoch) {
  cfg.dims.validate();
  if (cfg.dims.x_dim != kPixels || cfg.dims.cond_dim != kClasses) {
    throw DimensionError("digits flow needs x_dim = 64 and cond_dim = 10");
  }
  if (cfg.epochs < 0) throw DomainError("epochs must be non-negative");

  FlowArch arch = cfg.arch;
  arch.seed = cfg.seed;
  TrainConfig tc;
  tc.batch_size = cfg.batch_size;
  tc.lr = cfg.lr;
  tc.seed = cfg.seed;
  tc.cond = cfg.cond;
  tc.objective = ObjectiveKind::cond_nll;

  TrainResult r{FlowModel(cfg.dims, arch), AdamState{}, tc, Rng(Rng::derive_seed(cfg.seed, 2)), 0.0, {}};
  r.initial_test_accuracy = accuracy(classify_digits(r.model, data.test_x), data.test_labels);

  DatasetSource source(data.train_x, data.train_y);
  const int per_epoch = source.batches_per_epoch(cfg.batch_size);
  r.train_config.iterations = per_epoch;
  for (int e = 1; e <= cfg.epochs; ++e) {
    const TrainHistory h = train(r.model, source, r.train_config, r.optimizer, r.rng);
    double nll = 0.0;
    for (const auto& rec : h.records) nll += rec.report.total;
    EpochRecord rec{e, nll / static_cast<double>(h.records.size()),
                    accuracy(classify_digits(r.model, data.test_x), data.test_labels)};
    r.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  r.train_config.iterations = per_epoch * cfg.epochs;
  return r;
}

Tensor sample_digits(const FlowModel& model, int k, int n, const CondNLLConfig& cfg, Rng& rng, VMode v_mode) {
  if (k < 0 || k >= model.dims().cond_dim) throw DomainError("class index out of range");
  Tensor c(1, model.dims().cond_dim);
  c(0, k) = 1.0;
  Tensor x = conditional_sample(model, c, n, cfg, rng, v_mode);
  x.matrix() = x.matrix().cwiseMax(0.0).cwiseMin(1.0);
  return x;
}

GrayImage sample_grid(const std::vector<Tensor>& per_class) {
  std::vector<std::vector<std::vector<double>>> tiles;
  for (const Tensor& s : per_class) {
    auto& row = tiles.emplace_back();
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      row.emplace_back(s.matrix().row(i).data(), s.matrix().row(i).data() + s.cols());
    }
  }
  return tile_grid(tiles, kSide);
}

GrayImage style_grid(const FlowModel& model, int styles, Rng& rng) {
  const auto& d = model.dims();
  const Tensor z = rng.normal(styles, d.dummy_dim);
  std::vector<std::vector<std::vector<double>>> tiles(static_cast<std::size_t>(styles));
  for (int k = 0; k < d.cond_dim; ++k) {
    Tensor c(styles, d.cond_dim);
    c.matrix().col(k).setOnes();
    Tensor x = conditional_sample(model, c, z);
    for (int r = 0; r < styles; ++r) {
      tiles[static_cast<std::size_t>(r)].emplace_back(x.matrix().row(r).data(), x.matrix().row(r).data() + x.cols());
    }
  }
  return tile_grid(tiles, kSide);
}

}  // namespace cflow::digits
