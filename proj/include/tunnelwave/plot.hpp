// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tunnelwave Authors
#pragma once

// Raster output for RSS slices: binary 16-bit PGM plus a JSON sidecar.

#include <tunnelwave/error.hpp>
#include <tunnelwave/pwe.hpp>
#include <tunnelwave/serialization.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tunnelwave {

struct Heatmap {
  int width = 0;
  int height = 0;
  double min_db = 0.0;
  double max_db = 0.0;
  std::vector<std::uint16_t> levels;  // row-major, top row first
};

/// Maps a w x h slice (row j = grid row j, y growing upward) onto 0..65535,
/// min -> 0 and max -> 65535. The image is flipped so the roof is at the top.
/// A constant slice maps to all zeros.
inline Heatmap make_heatmap(std::span<const float> values, int w, int h) {
  if (w < 1 || h < 1 || values.size() != static_cast<std::size_t>(w) * h) {
    throw InvalidArgument("heatmap: slice size does not match " + std::to_string(w) + "x" + std::to_string(h));
  }
  Heatmap m{w, h, 0.0, 0.0, std::vector<std::uint16_t>(values.size())};
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (!std::isfinite(*lo) || !std::isfinite(*hi)) throw NumericError("heatmap: non-finite value in slice");
  m.min_db = *lo;
  m.max_db = *hi;
  const double span = m.max_db - m.min_db;
  for (int j = 0; j < h; ++j)
    for (int i = 0; i < w; ++i) {
      const double v = values[static_cast<std::size_t>(j) * w + i];
      const double u = span > 0.0 ? (v - m.min_db) / span : 0.0;
      m.levels[static_cast<std::size_t>(h - 1 - j) * w + i] = static_cast<std::uint16_t>(std::lround(u * 65535.0));
    }
  return m;
}

inline Heatmap make_heatmap(const RssVolume& v, int t) {
  if (t < 0 || t >= v.nz) throw InvalidArgument("heatmap: slice " + std::to_string(t) + " outside [0, " +
                                                std::to_string(v.nz) + ")");
  return make_heatmap(v.slice(t), v.grid.nx, v.grid.ny);
}

/// Binary PGM, maxval 65535, samples big-endian.
inline std::vector<std::uint8_t> encode_pgm(const Heatmap& m) {
  const std::string header = "P5\n" + std::to_string(m.width) + " " + std::to_string(m.height) + "\n65535\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + 2 * m.levels.size());
  for (std::uint16_t v : m.levels) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
  }
  return out;
}

inline Json heatmap_sidecar(const Heatmap& m) {
  return Json{{"width", m.width}, {"height", m.height}, {"min_db", m.min_db}, {"max_db", m.max_db},
              {"maxval", 65535}, {"row_order", "top row = largest y"}};
}

}  // namespace tunnelwave
