// Copyright (c) 2026 The cflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "cflow/tensor.hpp"

namespace cflow {

/// Comma-separated output with a header row, '.' decimals and LF endings.
/// Doubles are printed in shortest round-trip form.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);

  CsvWriter& cell(double v);
  CsvWriter& cell(long long v);
  CsvWriter& cell(int v) { return cell(static_cast<long long>(v)); }
  CsvWriter& cell(const std::string& v);
  void end_row();

 private:
  std::ofstream out_;
  std::size_t columns_;
  std::size_t in_row_ = 0;
};

std::string format_double(double v);

/// 8-colour palette used by every scatter panel, indexed by class mod 8.
inline constexpr const char* kClassPalette[8] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                                 "#9467bd", "#8c564b", "#e377c2", "#17becf"};

/// Standalone SVG scatter plot in a unit-square viewBox. Data bounds map to
/// [0.05, 0.95] on both axes (y grows upwards); one circle per row of
/// `points` (n×2), filled by class.
std::string scatter_svg(const Tensor& points, std::span<const int> classes, const std::string& title = {});
void emit_scatter_svg(const Tensor& points, std::span<const int> classes, const std::filesystem::path& path,
                      const std::string& title = {});

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  ///< row-major
};

/// Tiles square images into a grid with 1-pixel separators. `tiles[r][c]`
/// is a row vector of side*side values in [0, 1] (clamped).
GrayImage tile_grid(const std::vector<std::vector<std::vector<double>>>& tiles, int side, std::uint8_t separator = 255);

/// Binary PGM (P5, maxval 255).
void write_pgm(const std::filesystem::path& path, const GrayImage& image);

}  // namespace cflow
