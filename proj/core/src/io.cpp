// Copyright (c) 2026 The cflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "cflow/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "cflow/errors.hpp"

namespace cflow {

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : out_(path, std::ios::binary | std::ios::trunc), columns_(header.size()) {
  if (!out_) throw Error("cannot open for writing: " + path.string());
  for (const auto& h : header) cell(h);
  end_row();
}

CsvWriter& CsvWriter::cell(double v) { return cell(format_double(v)); }

CsvWriter& CsvWriter::cell(long long v) { return cell(std::to_string(v)); }

CsvWriter& CsvWriter::cell(const std::string& v) {
  if (in_row_ > 0) out_ << ',';
  out_ << v;
  ++in_row_;
  return *this;
}

void CsvWriter::end_row() {
  if (in_row_ != columns_) {
    throw ContractError("csv row has " + std::to_string(in_row_) + " cells, header has " + std::to_string(columns_));
  }
  out_ << '\n';
  in_row_ = 0;
  if (!out_) throw Error("csv write failed");
}

std::string scatter_svg(const Tensor& points, std::span<const int> classes, const std::string& title) {
  if (points.rows() > 0 && points.cols() != 2) throw DimensionError("scatter points must be n x 2");
  if (static_cast<Eigen::Index>(classes.size()) != points.rows()) {
    throw DimensionError("scatter: one class per point required");
  }
  if (points.rows() > 100000) throw DomainError("scatter: at most 1e5 points");

  double lo[2] = {0.0, 0.0};
  double hi[2] = {1.0, 1.0};
  bool seen = false;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    if (!std::isfinite(points(i, 0)) || !std::isfinite(points(i, 1))) continue;
    for (int a = 0; a < 2; ++a) {
      lo[a] = seen ? std::min(lo[a], points(i, a)) : points(i, a);
      hi[a] = seen ? std::max(hi[a], points(i, a)) : points(i, a);
    }
    seen = true;
  }
  auto map = [&](double v, int a) {
    const double span = hi[a] - lo[a];
    const double u = span > 0.0 ? (v - lo[a]) / span : 0.5;
    return std::round((0.05 + 0.9 * u) * 1e6) / 1e6;
  };

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 1 1\" width=\"600\" height=\"600\">\n";
  if (!title.empty()) os << "<title>" << title << "</title>\n";
  os << "<rect x=\"0\" y=\"0\" width=\"1\" height=\"1\" fill=\"white\"/>\n"
     << "<rect x=\"0.05\" y=\"0.05\" width=\"0.9\" height=\"0.9\" fill=\"none\" stroke=\"black\" "
        "stroke-width=\"0.002\"/>\n";
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    if (!std::isfinite(points(i, 0)) || !std::isfinite(points(i, 1))) continue;
    const int k = ((classes[static_cast<std::size_t>(i)] % 8) + 8) % 8;
    os << "<circle cx=\"" << format_double(map(points(i, 0), 0)) << "\" cy=\""
       << format_double(std::round((1.0 - map(points(i, 1), 1)) * 1e6) / 1e6) << "\" r=\"0.004\" fill=\"" << kClassPalette[k] << "\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void emit_scatter_svg(const Tensor& points, std::span<const int> classes, const std::filesystem::path& path,
                      const std::string& title) {
  const std::string svg = scatter_svg(points, classes, title);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << svg;
  if (!out) throw Error("svg write failed: " + path.string());
}

GrayImage tile_grid(const std::vector<std::vector<std::vector<double>>>& tiles, int side, std::uint8_t separator) {
  const int rows = static_cast<int>(tiles.size());
  const int cols = rows == 0 ? 0 : static_cast<int>(tiles.front().size());
  GrayImage img;
  img.width = cols == 0 ? 0 : cols * side + (cols - 1);
  img.height = rows == 0 ? 0 : rows * side + (rows - 1);
  img.pixels.assign(static_cast<std::size_t>(img.width) * img.height, separator);
  for (int r = 0; r < rows; ++r) {
    if (static_cast<int>(tiles[r].size()) != cols) throw DimensionError("tile grid rows differ in length");
    for (int c = 0; c < cols; ++c) {
      const auto& tile = tiles[r][c];
      if (static_cast<int>(tile.size()) != side * side) throw DimensionError("tile has wrong pixel count");
      for (int py = 0; py < side; ++py) {
        for (int px = 0; px < side; ++px) {
          const double v = std::clamp(tile[py * side + px], 0.0, 1.0);
          const int y = r * (side + 1) + py;
          const int x = c * (side + 1) + px;
          img.pixels[static_cast<std::size_t>(y) * img.width + x] = static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
      }
    }
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw Error("pgm write failed: " + path.string());
}

}  // namespace cflow
