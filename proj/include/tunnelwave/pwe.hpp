// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tunnelwave Authors
#pragma once

#include <tunnelwave/error.hpp>
#include <tunnelwave/fft.hpp>
#include <tunnelwave/geometry.hpp>

#include <cmath>
#include <complex>
#include <functional>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tunnelwave {

using cdouble = std::complex<double>;

/// Amplitude floor of the dB conversion: 20*log10(1e-12) = -240 dB.
inline constexpr double kAmplitudeFloor = 1e-12;
inline constexpr double kRssFloorDb = -240.0;

/// Absorbing taper width at the outer edge of the grid, in coarse cells.
inline constexpr int kAbsorberCells = 4;

struct Material {
  double eps_r = 5.0;
  double sigma = 0.01;  // S/m
};

struct Transmitter {
  double x = 0.0;
  double y = 1.0;
};

/// Parameters of one marching run. Use `PweConfig::standard` for the
/// delta_z = 2 lambda, beam_std = 3 lambda configuration.
struct PweConfig {
  double frequency = 0.9e9;  // Hz
  double delta_z = 0.0;      // m
  double length = 1000.0;    // m
  Material material;
  Transmitter tx;
  double beam_std = 0.0;  // m
  double mesh_factor = kFineMeshFactor;
  bool absorber = true;

  static PweConfig standard(double frequency, double length, Material material, Transmitter tx, double mesh_factor) {
    const double lambda = wavelength(frequency);
    PweConfig c;
    c.frequency = frequency;
    c.delta_z = 2.0 * lambda;
    c.length = length;
    c.material = material;
    c.tx = tx;
    c.beam_std = 3.0 * lambda;
    c.mesh_factor = mesh_factor;
    return c;
  }

  double lambda() const { return wavelength(frequency); }
  double wavenumber() const { return 2.0 * std::numbers::pi * frequency / kSpeedOfLight; }
  double omega() const { return 2.0 * std::numbers::pi * frequency; }

  /// Number of slices emitted by `march`.
  std::size_t slice_count() const { return static_cast<std::size_t>(std::floor(length / delta_z + 1e-9)); }

  void validate() const {
    if (!(frequency > 0.0)) throw InvalidArgument("frequency must be positive");
    if (!(delta_z > 0.0)) throw InvalidArgument("delta_z must be positive");
    if (!(length > 0.0)) throw InvalidArgument("length must be positive");
    if (!(beam_std > 0.0)) throw InvalidArgument("beam_std must be positive");
    if (!(material.eps_r >= 1.0)) throw InvalidArgument("eps_r must be >= 1");
    if (!(material.sigma >= 0.0)) throw InvalidArgument("sigma must be >= 0");
  }
};

/// Principal complex refractive index sqrt(eps_r - i*sigma/(omega*eps0)).
inline cdouble refractive_index(const Material& m, double frequency) {
  const double omega = 2.0 * std::numbers::pi * frequency;
  return std::sqrt(cdouble(m.eps_r, -m.sigma / (omega * kVacuumPermittivity)));
}

struct FieldSlice {
  GridSpec grid;
  double z = 0.0;
  std::vector<cdouble> u;  // index j*nx + i

  cdouble& at(int i, int j) { return u[static_cast<std::size_t>(j) * grid.nx + i]; }
  const cdouble& at(int i, int j) const { return u[static_cast<std::size_t>(j) * grid.nx + i]; }

  double power() const {
    double p = 0.0;
    for (const auto& v : u) p += std::norm(v);
    return p;
  }
  bool finite() const {
    for (const auto& v : u)
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
    return true;
  }
};

struct RssSlice {
  double z = 0.0;
  std::vector<float> db;
};

inline double amplitude_to_db(double amplitude) { return 20.0 * std::log10(std::max(amplitude, kAmplitudeFloor)); }

inline RssSlice to_rss(const FieldSlice& field) {
  RssSlice s{field.z, std::vector<float>(field.u.size())};
  for (std::size_t c = 0; c < field.u.size(); ++c) s.db[c] = static_cast<float>(amplitude_to_db(std::abs(field.u[c])));
  return s;
}

/// Unit-amplitude Gaussian launched at tx, zeroed outside the interior mask.
inline FieldSlice gaussian_source(const GridSpec& grid, const Mask& mask, const CrossSection& section,
                                  const Transmitter& tx, double beam_std) {
  if (!section.contains(tx.x, tx.y)) {
    throw InvalidArgument("transmitter (" + std::to_string(tx.x) + ", " + std::to_string(tx.y) +
                          ") lies outside the cross-section");
  }
  if (!(beam_std > 0.0)) throw InvalidArgument("beam_std must be positive");
  FieldSlice f{grid, 0.0, std::vector<cdouble>(grid.cells())};
  const double inv = 1.0 / (2.0 * beam_std * beam_std);
  for (int j = 0; j < grid.ny; ++j) {
    const double dy = grid.y(j) - tx.y;
    for (int i = 0; i < grid.nx; ++i) {
      if (!mask(i, j)) continue;
      const double dx = grid.x(i) - tx.x;
      f.at(i, j) = std::exp(-(dx * dx + dy * dy) * inv);
    }
  }
  return f;
}

/// Free-space Gaussian with no mask, for oracle checks.
inline FieldSlice gaussian_beam(const GridSpec& grid, double x0, double y0, double beam_std) {
  FieldSlice f{grid, 0.0, std::vector<cdouble>(grid.cells())};
  const double inv = 1.0 / (2.0 * beam_std * beam_std);
  for (int j = 0; j < grid.ny; ++j)
    for (int i = 0; i < grid.nx; ++i) {
      const double dx = grid.x(i) - x0;
      const double dy = grid.y(j) - y0;
      f.at(i, j) = std::exp(-(dx * dx + dy * dy) * inv);
    }
  return f;
}

/// Spectral free-space propagator for a fixed grid, step and wavenumber.
///
/// The field carries an exp(-i k z) envelope (the convention under which the
/// refractive index sqrt(eps_r - i sigma/(omega eps0)) is lossy), so the
/// paraxial step is u_hat <- u_hat * exp(+i (kx^2 + ky^2) dz / (2k)).
/// The multiplier has unit modulus; the 1/N of the inverse FFT is folded in.
class FreeSpacePropagator {
 public:
  FreeSpacePropagator(const GridSpec& grid, double delta_z, double k)
      : grid_(grid), delta_z_(delta_z), fft_(grid.nx, grid.ny), multiplier_(grid.cells()) {
    const double two_pi = 2.0 * std::numbers::pi;
    const double dkx = two_pi / (grid.nx * grid.delta);
    const double dky = two_pi / (grid.ny * grid.delta);
    const double scale = 1.0 / static_cast<double>(grid.cells());
    for (int j = 0; j < grid.ny; ++j) {
      const double ky = dky * (j <= grid.ny / 2 ? j : j - grid.ny);
      for (int i = 0; i < grid.nx; ++i) {
        const double kx = dkx * (i <= grid.nx / 2 ? i : i - grid.nx);
        const double phase = (kx * kx + ky * ky) * delta_z / (2.0 * k);
        multiplier_[static_cast<std::size_t>(j) * grid.nx + i] = std::polar(scale, phase);
      }
    }
  }

  void step(FieldSlice& field) const {
    if (field.grid.nx != grid_.nx || field.grid.ny != grid_.ny) throw InvalidArgument("propagator grid mismatch");
    fft_.forward(field.u);
    for (std::size_t c = 0; c < field.u.size(); ++c) field.u[c] *= multiplier_[c];
    fft_.inverse_unscaled(field.u);
    field.z += delta_z_;
  }

 private:
  GridSpec grid_;
  double delta_z_;
  Fft2d fft_;
  std::vector<cdouble> multiplier_;
};

inline FieldSlice freespace_step(FieldSlice field, double delta_z, double k) {
  if (!field.finite()) throw NumericError("freespace_step: non-finite input field");
  FreeSpacePropagator(field.grid, delta_z, k).step(field);
  return field;
}

/// Raised-cosine edge taper over `width` metres at every side of the grid.
inline double absorber_taper(const GridSpec& grid, int i, int j, double width) {
  if (width <= 0.0) return 1.0;
  auto ramp = [width](double d) {
    if (d >= width) return 1.0;
    return 0.5 * (1.0 - std::cos(std::numbers::pi * d / width));
  };
  const double dx = std::min(i + 0.5, grid.nx - i - 0.5) * grid.delta;
  const double dy = std::min(j + 0.5, grid.ny - j - 0.5) * grid.delta;
  return ramp(dx) * ramp(dy);
}

/// Per-cell multiplicative screen applied after every free-space step:
/// 1 in the interior, exp(-i k (n - 1) dz) in wall cells, times the edge
/// absorber taper when `absorber_width` > 0.
struct MediumScreen {
  std::vector<cdouble> factor;

  static MediumScreen build(const GridSpec& grid, const Mask& mask, const Material& material, double frequency,
                            double delta_z, double absorber_width) {
    const double k = 2.0 * std::numbers::pi * frequency / kSpeedOfLight;
    const cdouble n = refractive_index(material, frequency);
    const cdouble wall = std::exp(cdouble(0.0, -1.0) * k * (n - 1.0) * delta_z);
    MediumScreen s{std::vector<cdouble>(grid.cells())};
    for (int j = 0; j < grid.ny; ++j)
      for (int i = 0; i < grid.nx; ++i) {
        const cdouble base = mask(i, j) ? cdouble(1.0) : wall;
        s.factor[static_cast<std::size_t>(j) * grid.nx + i] = base * absorber_taper(grid, i, j, absorber_width);
      }
    return s;
  }

  void apply(FieldSlice& field) const {
    for (std::size_t c = 0; c < field.u.size(); ++c) field.u[c] *= factor[c];
  }
};

/// Absorber width (metres) for a configuration: kAbsorberCells coarse cells, or 0 when disabled.
inline double absorber_width(const PweConfig& config) {
  return config.absorber ? kAbsorberCells * kCoarseMeshFactor * config.lambda() : 0.0;
}

inline FieldSlice medium_screen(FieldSlice field, const Mask& mask, const Material& material, double frequency,
                                double delta_z, double absorber_width = 0.0) {
  MediumScreen::build(field.grid, mask, material, frequency, delta_z, absorber_width).apply(field);
  return field;
}

/// Normalisation bounds of RSS values in dB.
struct NormStats {
  double min_db = 0.0;
  double max_db = 0.0;
};

/// Stack of RSS slices spaced delta_z apart, slice k at z = (k + 1) * delta_z.
/// Values are stored slice-major, row-major (x fastest) within a slice.
struct RssVolume {
  GridSpec grid;
  PweConfig config;
  CrossSection section;
  NormStats stats;
  int nz = 0;
  std::vector<float> values;

  std::size_t slice_size() const { return grid.cells(); }
  std::span<float> slice(int t) { return {values.data() + static_cast<std::size_t>(t) * slice_size(), slice_size()}; }
  std::span<const float> slice(int t) const {
    return {values.data() + static_cast<std::size_t>(t) * slice_size(), slice_size()};
  }
  double z_of(int t) const { return (t + 1) * config.delta_z; }
  float at(int t, int i, int j) const { return slice(t)[static_cast<std::size_t>(j) * grid.nx + i]; }
  Mask interior() const { return rasterize_mask(section, grid); }
};

/// Min/max over interior cells of every slice.
inline NormStats interior_range(const RssVolume& v) {
  const Mask m = v.interior();
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (int t = 0; t < v.nz; ++t) {
    auto s = v.slice(t);
    for (std::size_t c = 0; c < s.size(); ++c) {
      if (!m.cells[c]) continue;
      lo = std::min(lo, static_cast<double>(s[c]));
      hi = std::max(hi, static_cast<double>(s[c]));
    }
  }
  return {lo, hi};
}

/// Mean RSS (dB) over the interior cells of slice t.
inline double mean_interior_rss(const RssVolume& v, int t) {
  const Mask m = v.interior();
  auto s = v.slice(t);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < s.size(); ++c)
    if (m.cells[c]) {
      sum += s[c];
      ++n;
    }
  if (n == 0) throw InvalidArgument("slice has no interior cells");
  return sum / static_cast<double>(n);
}

inline double interior_power(const FieldSlice& f, const Mask& mask) {
  double p = 0.0;
  for (std::size_t c = 0; c < f.u.size(); ++c)
    if (mask.cells[c]) p += std::norm(f.u[c]);
  return p;
}

/// Optional per-step observer, called after the screen with the current field.
using StepObserver = std::function<void(const FieldSlice&)>;

/// Marches the launched Gaussian along the tunnel and records one RSS slice
/// after every step. When `window` is given only that cell window of the
/// grid is recorded (the field itself is always marched on the full grid).
inline RssVolume march(const PweConfig& config, const CrossSection& section, const GridSpec& grid, const Mask& mask,
                       std::optional<CellWindow> window = std::nullopt, const StepObserver& observer = {}) {
  config.validate();
  grid.validate();
  if (mask.nx != grid.nx || mask.ny != grid.ny) throw InvalidArgument("mask dimensions do not match the grid");
  const CellWindow w = window.value_or(CellWindow{0, 0, grid.nx, grid.ny});
  const GridSpec out_grid = grid.window(w.i0, w.j0, w.nx, w.ny);

  const std::size_t count = config.slice_count();
  RssVolume vol;
  vol.grid = out_grid;
  vol.config = config;
  vol.section = section;
  vol.nz = static_cast<int>(count);
  vol.values.resize(count * out_grid.cells());

  FieldSlice u = gaussian_source(grid, mask, section, config.tx, config.beam_std);
  const FreeSpacePropagator prop(grid, config.delta_z, config.wavenumber());
  const MediumScreen screen =
      MediumScreen::build(grid, mask, config.material, config.frequency, config.delta_z, absorber_width(config));

  for (std::size_t t = 0; t < count; ++t) {
    prop.step(u);
    screen.apply(u);
    if (!std::isfinite(u.power())) {
      throw NumericError("non-finite field at z = " + std::to_string(u.z) + " m");
    }
    if (observer) observer(u);
    auto dst = vol.slice(static_cast<int>(t));
    for (int j = 0; j < w.ny; ++j)
      for (int i = 0; i < w.nx; ++i)
        dst[static_cast<std::size_t>(j) * w.nx + i] =
            static_cast<float>(amplitude_to_db(std::abs(u.at(w.i0 + i, w.j0 + j))));
  }
  vol.stats = interior_range(vol);
  return vol;
}

}  // namespace tunnelwave
