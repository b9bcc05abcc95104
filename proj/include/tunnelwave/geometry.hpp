// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tunnelwave Authors
#pragma once

#include <tunnelwave/error.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tunnelwave {

inline constexpr double kSpeedOfLight = 299792458.0;     // m/s
inline constexpr double kVacuumPermittivity = 8.8541878128e-12;  // F/m

/// Transverse cell size of the coarse mesh, in wavelengths.
inline constexpr double kCoarseMeshFactor = 3.2;
/// Transverse cell size of the fine mesh, in wavelengths.
inline constexpr double kFineMeshFactor = 0.4;
/// Linear refinement between the two meshes.
inline constexpr int kMeshRatio = 8;
/// Exterior padding around a section, in coarse cells.
inline constexpr int kGuardCells = 8;

inline double wavelength(double frequency_hz) { return kSpeedOfLight / frequency_hz; }

enum class TunnelShape : int {
  rectangular = 1,
  arched = 2,
  arched_vertical_walls = 3,
  trapezoidal = 4,
};

inline std::string_view to_string(TunnelShape s) {
  switch (s) {
    case TunnelShape::rectangular: return "rectangular";
    case TunnelShape::arched: return "arched";
    case TunnelShape::arched_vertical_walls: return "arched_vertical_walls";
    case TunnelShape::trapezoidal: return "trapezoidal";
  }
  return "unknown";
}

inline TunnelShape shape_from_index(int index) {
  if (index < 1 || index > 4) throw InvalidArgument("tunnel shape index must be in 1..4, got " + std::to_string(index));
  return static_cast<TunnelShape>(index);
}

inline TunnelShape shape_from_string(std::string_view name) {
  for (int i = 1; i <= 4; ++i) {
    if (to_string(static_cast<TunnelShape>(i)) == name) return static_cast<TunnelShape>(i);
  }
  throw InvalidArgument("unknown tunnel shape '" + std::string(name) + "'");
}

/// Shape parameters that only some kinds use.
struct SectionExtras {
  double arch_spring_height = 2.0;
  double top_width = 3.0;
};

/// Tunnel cross-section. x = 0 is the tunnel axis, y = 0 the floor.
///
/// - rectangular: |x| <= width/2, 0 <= y <= height.
/// - arched: half-ellipse standing on the floor, semi-axes (width/2, height);
///   the walls curve from the floor and arch_spring_height is not used.
/// - arched_vertical_walls: vertical walls up to arch_spring_height, then a
///   half-ellipse cap with semi-axes (width/2, height - arch_spring_height).
/// - trapezoidal: side walls slope linearly from width (floor) to top_width.
struct CrossSection {
  TunnelShape kind = TunnelShape::rectangular;
  double width = 4.0;
  double height = 4.0;
  double arch_spring_height = 2.0;
  double top_width = 3.0;

  /// Largest interior |x| at height y, or a negative value when y is outside [0, height].
  double half_width_at(double y) const {
    if (y < 0.0 || y > height) return -1.0;
    const double a = 0.5 * width;
    switch (kind) {
      case TunnelShape::rectangular:
        return a;
      case TunnelShape::arched: {
        const double t = y / height;
        return a * std::sqrt(std::max(0.0, 1.0 - t * t));
      }
      case TunnelShape::arched_vertical_walls: {
        if (y <= arch_spring_height) return a;
        const double t = (y - arch_spring_height) / (height - arch_spring_height);
        return a * std::sqrt(std::max(0.0, 1.0 - t * t));
      }
      case TunnelShape::trapezoidal:
        return a - 0.5 * (width - top_width) * (y / height);
    }
    return -1.0;
  }

  bool contains(double x, double y) const {
    const double hw = half_width_at(y);
    return hw >= 0.0 && std::abs(x) <= hw;
  }
};

inline CrossSection make_cross_section(TunnelShape kind, double width, double height, SectionExtras extras = {}) {
  if (!(width > 0.0) || !(height > 0.0)) throw InvalidArgument("cross-section width and height must be positive");
  if (kind == TunnelShape::trapezoidal && !(extras.top_width > 0.0 && extras.top_width <= width)) {
    throw InvalidArgument("trapezoid top_width must satisfy 0 < top_width <= width");
  }
  if ((kind == TunnelShape::arched || kind == TunnelShape::arched_vertical_walls) &&
      !(extras.arch_spring_height >= 0.0 && extras.arch_spring_height < height)) {
    throw InvalidArgument("arch_spring_height must satisfy 0 <= arch_spring_height < height");
  }
  return CrossSection{kind, width, height, extras.arch_spring_height, extras.top_width};
}

/// Uniform transverse grid. Cell (i, j) has its centre at
/// (x_origin + i*delta, y_origin + j*delta); i runs along x, j along y.
struct GridSpec {
  int nx = 0;
  int ny = 0;
  double delta = 0.0;
  double x_origin = 0.0;
  double y_origin = 0.0;

  double x(int i) const { return x_origin + i * delta; }
  double y(int j) const { return y_origin + j * delta; }
  std::size_t cells() const { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }

  /// Index of the cell whose centre is nearest to (x, y), clamped to the grid.
  std::pair<int, int> nearest(double px, double py) const {
    auto clampi = [](long v, int n) { return static_cast<int>(std::clamp<long>(v, 0, n - 1)); };
    return {clampi(std::lround((px - x_origin) / delta), nx), clampi(std::lround((py - y_origin) / delta), ny)};
  }

  void validate() const {
    if (nx < 4 || ny < 4) throw InvalidArgument("grid must have at least 4x4 cells");
    if (!(delta > 0.0)) throw InvalidArgument("grid delta must be positive");
  }

  /// Sub-window starting at cell (i0, j0).
  GridSpec window(int i0, int j0, int wnx, int wny) const {
    if (i0 < 0 || j0 < 0 || wnx < 1 || wny < 1 || i0 + wnx > nx || j0 + wny > ny) {
      throw InvalidArgument("grid window out of range");
    }
    return GridSpec{wnx, wny, delta, x(i0), y(j0)};
  }
};

/// Interior mask, true = air. Stored row-major with x fastest: index j*nx + i.
struct Mask {
  int nx = 0;
  int ny = 0;
  std::vector<std::uint8_t> cells;

  bool operator()(int i, int j) const { return cells[static_cast<std::size_t>(j) * nx + i] != 0; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto c : cells) n += c != 0;
    return n;
  }
};

inline Mask rasterize_mask(const CrossSection& section, const GridSpec& grid) {
  Mask m{grid.nx, grid.ny, std::vector<std::uint8_t>(grid.cells(), 0)};
  for (int j = 0; j < grid.ny; ++j) {
    const double hw = section.half_width_at(grid.y(j));
    if (hw < 0.0) continue;
    for (int i = 0; i < grid.nx; ++i) {
      m.cells[static_cast<std::size_t>(j) * grid.nx + i] = std::abs(grid.x(i)) <= hw ? 1 : 0;
    }
  }
  return m;
}

inline double default_guard_band(double frequency_hz) {
  return kGuardCells * kCoarseMeshFactor * wavelength(frequency_hz);
}

/// Grid for `mesh_factor` wavelengths per cell. The physical extent is always
/// a whole number of coarse (3.2 lambda) cells, so grids built from the same
/// frequency and section at factors 3.2 and 0.4 cover identical extents and
/// the fine counts are exactly 8x the coarse counts.
inline GridSpec grid_from_wavelength(double frequency_hz, double mesh_factor, const CrossSection& section,
                                     double guard_band) {
  if (!(frequency_hz > 0.0)) throw InvalidArgument("frequency must be positive");
  if (!(mesh_factor > 0.0)) throw InvalidArgument("mesh factor must be positive");
  if (!(guard_band >= 0.0)) throw InvalidArgument("guard band must be non-negative");
  const double lambda = wavelength(frequency_hz);
  const double coarse = kCoarseMeshFactor * lambda;
  constexpr double slack = 1e-9;
  const int span_x = static_cast<int>(std::ceil(section.width / coarse - slack));
  const int span_y = static_cast<int>(std::ceil(section.height / coarse - slack));
  if (span_x < 4 || span_y < 4) {
    throw InvalidArgument("cross-section spans fewer than 4 coarse cells at " + std::to_string(frequency_hz / 1e9) +
                          " GHz");
  }
  const int guard = static_cast<int>(std::ceil(guard_band / coarse - slack));
  const double ratio = kCoarseMeshFactor / mesh_factor;
  const int nx = static_cast<int>(std::ceil((span_x + 2 * guard) * ratio - slack));
  const int ny = static_cast<int>(std::ceil((span_y + 2 * guard) * ratio - slack));
  const double delta = mesh_factor * lambda;
  GridSpec g{nx, ny, delta, -0.5 * (nx - 1) * delta, 0.5 * section.height - 0.5 * (ny - 1) * delta};
  g.validate();
  return g;
}

struct GridPair {
  GridSpec coarse;
  GridSpec fine;
};

inline GridPair paired_grids(double frequency_hz, const CrossSection& section, double guard_band) {
  return {grid_from_wavelength(frequency_hz, kCoarseMeshFactor, section, guard_band),
          grid_from_wavelength(frequency_hz, kFineMeshFactor, section, guard_band)};
}

/// Coarse-cell window covering the section bounding box plus `margin` coarse
/// cells on every side, clamped to the grid. Returned as (i0, j0, nx, ny).
struct CellWindow {
  int i0 = 0;
  int j0 = 0;
  int nx = 0;
  int ny = 0;

  CellWindow scaled(int factor) const { return {i0 * factor, j0 * factor, nx * factor, ny * factor}; }
};

inline CellWindow section_window(const CrossSection& section, const GridSpec& coarse, int margin) {
  auto cell_of = [&](double v, double origin) { return static_cast<int>(std::floor((v - origin) / coarse.delta + 0.5)); };
  int i_lo = cell_of(-0.5 * section.width, coarse.x_origin) - margin;
  int i_hi = cell_of(0.5 * section.width, coarse.x_origin) + margin;
  int j_lo = cell_of(0.0, coarse.y_origin) - margin;
  int j_hi = cell_of(section.height, coarse.y_origin) + margin;
  i_lo = std::max(i_lo, 0);
  j_lo = std::max(j_lo, 0);
  i_hi = std::min(i_hi, coarse.nx - 1);
  j_hi = std::min(j_hi, coarse.ny - 1);
  // Keep the window symmetric about the tunnel axis.
  const int left = i_lo;
  const int right = coarse.nx - 1 - i_hi;
  const int pad = std::min(left, right);
  i_lo = pad;
  i_hi = coarse.nx - 1 - pad;
  return {i_lo, j_lo, i_hi - i_lo + 1, j_hi - j_lo + 1};
}

}  // namespace tunnelwave
