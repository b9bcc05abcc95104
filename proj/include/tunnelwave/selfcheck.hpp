// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tunnelwave Authors
#pragma once

// Built-in correctness checks with closed-form or brute-force references.
// Each returns a CheckOutcome rather than throwing so a caller can report all
// of them; `tunnelwave selfcheck` runs the fast ones.

#include <tunnelwave/autograd.hpp>
#include <tunnelwave/metrics.hpp>
#include <tunnelwave/prbpn.hpp>
#include <tunnelwave/pwe.hpp>
#include <tunnelwave/rng.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

namespace tunnelwave::selfcheck {

struct CheckOutcome {
  std::string name;
  bool passed = false;
  double value = 0.0;  // the measured error
  double bound = 0.0;  // pass iff value < bound (<= for monotonicity)
  std::string detail;
};

namespace detail {

inline std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

inline CheckOutcome below(std::string name, double value, double bound, std::string detail = {}) {
  return {std::move(name), value < bound, value, bound, std::move(detail)};
}

inline tc::Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  tc::Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Amplitude-weighted standard deviation along x about x0.
inline double amplitude_std_x(const FieldSlice& f, double x0) {
  double w = 0.0, m2 = 0.0;
  for (int j = 0; j < f.grid.ny; ++j)
    for (int i = 0; i < f.grid.nx; ++i) {
      const double a = std::abs(f.at(i, j));
      const double dx = f.grid.x(i) - x0;
      w += a;
      m2 += a * dx * dx;
    }
  return std::sqrt(m2 / w);
}

}  // namespace detail

/// Free-space spreading of the launched Gaussian (std 3 lambda) against the
/// paraxial closed form s0 * sqrt(1 + (z / (k s0^2))^2).
inline CheckOutcome beam_oracle(double frequency = 2.4e9, double distance = 50.0, double tolerance = 0.01) {
  const double lambda = wavelength(frequency);
  const double k = 2.0 * std::numbers::pi / lambda;
  const double s0 = 3.0 * lambda;
  const double delta = kFineMeshFactor * lambda;
  const int n = 512;
  const GridSpec g{n, n, delta, -0.5 * (n - 1) * delta, -0.5 * (n - 1) * delta};
  auto u = gaussian_beam(g, 0.0, 0.0, s0);
  const double dz = 2.0 * lambda;
  const FreeSpacePropagator prop(g, dz, k);
  const int steps = static_cast<int>(std::floor(distance / dz + 1e-9));
  for (int s = 0; s < steps; ++s) prop.step(u);
  const double z = steps * dz;
  const double zr = k * s0 * s0;
  const double expected = s0 * std::sqrt(1.0 + (z / zr) * (z / zr));
  const double measured = detail::amplitude_std_x(u, 0.0);
  return detail::below("beam oracle", std::abs(measured / expected - 1.0), tolerance,
                       "std " + detail::fmt(measured) + " m vs " + detail::fmt(expected) + " m at z = " +
                           detail::fmt(z) + " m");
}

/// Relative L2 drift of lossless marching with walls and absorber disabled.
inline CheckOutcome unitarity(int steps = 100, double tolerance = 1e-10) {
  const double f = 2.4e9;
  const double lambda = wavelength(f);
  const double d = kFineMeshFactor * lambda;
  const GridSpec g{96, 80, d, -47.5 * d, -39.5 * d + 2.0};
  const auto section = make_cross_section(TunnelShape::rectangular, 1000.0, 1000.0);
  auto cfg = PweConfig::standard(f, steps * 2.0 * lambda, {1.0, 0.0}, {0.2, 2.0}, kFineMeshFactor);
  cfg.absorber = false;
  const Mask mask{g.nx, g.ny, std::vector<std::uint8_t>(g.cells(), 1)};
  const double p0 = gaussian_source(g, mask, section, cfg.tx, cfg.beam_std).power();
  double worst = 0.0;
  int count = 0;
  march(cfg, section, g, mask, std::nullopt, [&](const FieldSlice& u) {
    worst = std::max(worst, std::abs(u.power() - p0) / p0);
    ++count;
  });
  return detail::below("unitarity", worst, tolerance, std::to_string(count) + " steps");
}

/// Wall cells of one screen application scale by exp(-k Im(n) dz), with n
/// taken from a polar-form square root rather than std::sqrt.
inline CheckOutcome wall_screen(double tolerance = 1e-12) {
  double worst = 0.0;
  const auto section = make_cross_section(TunnelShape::rectangular, 4.0, 4.0);
  for (double f : {0.9e9, 2.4e9})
    for (double sigma : {0.001, 0.01, 0.1}) {
      const Material m{5.0, sigma};
      const auto g = grid_from_wavelength(f, kCoarseMeshFactor, section, default_guard_band(f));
      const auto mask = rasterize_mask(section, g);
      const double k = 2.0 * std::numbers::pi * f / kSpeedOfLight;
      const double dz = 2.0 * wavelength(f);
      const double ratio = sigma / (2.0 * std::numbers::pi * f * kVacuumPermittivity);
      const double r = std::hypot(m.eps_r, ratio);
      const double theta = std::atan2(-ratio, m.eps_r);
      const double im_n = std::sqrt(r) * std::sin(theta / 2.0);
      const double expected = std::exp(k * im_n * dz);  // im_n < 0
      FieldSlice u{g, 0.0, std::vector<cdouble>(g.cells(), cdouble(1.0, 0.0))};
      const auto v = medium_screen(u, mask, m, f, dz);
      for (std::size_t c = 0; c < v.u.size(); ++c)
        if (!mask.cells[c]) worst = std::max(worst, std::abs(std::abs(v.u[c]) - expected));
    }
  return detail::below("wall screen", worst, tolerance, "2 frequencies x 3 conductivities");
}

/// Mean interior RSS at `distance` for a rectangular tunnel at each sigma.
inline std::vector<double> sigma_sweep(const std::vector<double>& sigmas, double frequency = 2.4e9,
                                       double distance = 500.0) {
  const auto section = make_cross_section(TunnelShape::rectangular, 4.0, 4.0);
  const auto g = grid_from_wavelength(frequency, kCoarseMeshFactor, section, default_guard_band(frequency));
  const auto mask = rasterize_mask(section, g);
  std::vector<double> out;
  for (double sigma : sigmas) {
    const auto cfg = PweConfig::standard(frequency, distance, {5.0, sigma}, {0.0, 2.0}, kCoarseMeshFactor);
    const auto vol = march(cfg, section, g, mask, section_window(section, g, 0));
    out.push_back(mean_interior_rss(vol, vol.nz - 1));
  }
  return out;
}

/// Largest rise of the 500 m mean RSS from one sigma to the next larger one.
inline CheckOutcome sigma_monotonicity() {
  const std::vector<double> sigmas{0.001, 0.01, 0.1};
  const auto rss = sigma_sweep(sigmas);
  double rise = -std::numeric_limits<double>::infinity();
  std::string d;
  for (std::size_t k = 0; k < rss.size(); ++k) {
    if (k) rise = std::max(rise, rss[k] - rss[k - 1]);
    d += (k ? ", " : "") + detail::fmt(rss[k]) + " dB";
  }
  CheckOutcome o{"sigma monotonicity", rise <= 0.0, rise, 0.0, d};
  return o;
}

/// conv_transpose2d against conv2d: <A x, y> = <x, A^T y> on random shapes,
/// every fourth one the 12/8/2 projection geometry.
inline CheckOutcome adjoint(int shapes = 20, double tolerance = 1e-10, std::uint64_t seed = 3) {
  Rng rng(seed);
  double worst = 0.0;
  std::string where;
  for (int trial = 0; trial < shapes; ++trial) {
    int b, ci, co, h, w, k, s, p;
    auto draw = [&](int n) { return static_cast<int>(rng.below(static_cast<std::uint64_t>(n))); };
    if (trial % 4 == 0) {
      b = 1 + draw(2), ci = 1 + draw(3), co = 1 + draw(3);
      h = 8 * (1 + draw(3)), w = 8 * (1 + draw(3));
      k = 12, s = 8, p = 2;
    } else {
      b = 1 + draw(2), ci = 1 + draw(4), co = 1 + draw(4);
      k = 1 + draw(4), s = 1 + draw(3);
      p = draw(k);
      const int ho = 1 + draw(6), wo = 1 + draw(6);
      h = (ho - 1) * s - 2 * p + k;
      w = (wo - 1) * s - 2 * p + k;
      if (h < 1 || w < 1) {
        p = 0;
        h = (ho - 1) * s + k;
        w = (wo - 1) * s + k;
      }
    }
    const tc::ConvGeometry g{s, p};
    const auto x = detail::random_tensor({b, ci, h, w}, rng);
    const auto wt = detail::random_tensor({co, ci, k, k}, rng);
    const auto ax = tc::conv2d(x, wt, nullptr, g);
    const auto y = detail::random_tensor(ax.shape(), rng);
    const auto aty = tc::conv_transpose2d(y, wt, nullptr, g);
    const double lhs = tc::dot(ax, y), rhs = tc::dot(x, aty);
    const double err = std::abs(lhs - rhs) / std::max(std::abs(lhs), 1.0);
    if (err >= worst) {
      worst = err;
      where = "worst shape " + x.shape_string() + " * " + wt.shape_string() + " s" + std::to_string(s) + " p" +
              std::to_string(p);
    }
  }
  return detail::below("adjoint", worst, tolerance, std::to_string(shapes) + " shapes, " + where);
}

/// Central-difference check of every differentiable op and of a toy network's
/// forward + loss (with and without DWTF). The outcome names every failing op.
inline CheckOutcome gradients(double tolerance = 1e-4) {
  using namespace tc;
  Rng rng(7);
  auto rt = [&](std::vector<int> s) { return Var(detail::random_tensor(std::move(s), rng), true); };
  // small readout weights keep ulp(f) / 2h far below the 1e-8 floor
  auto readout = [](const Var& y) {
    Rng r2(99);
    return sum(mul(y, Var(detail::random_tensor(y.value().shape(), r2, -1e-3, 1e-3))));
  };
  auto small = [](const Var& loss) { return scale(loss, 1e-3); };
  struct Check {
    std::string name;
    std::function<Var()> f;
    std::vector<std::pair<std::string, Var>> inputs;
  };
  auto a = rt({1, 2, 4, 4}), b = rt({1, 2, 4, 4}), m = rt({1, 1, 4, 4});
  auto slope = Var(Tensor({1}, {0.25}), true);
  auto w3 = rt({3, 2, 3, 3}), b3 = rt({3});
  auto w6 = rt({6, 2, 3, 3}), b6 = rt({6});
  auto hr = rt({1, 2, 16, 16}), wp = rt({2, 2, 12, 12}), bp = rt({2});
  auto lr = rt({1, 2, 2, 2});
  const Tensor target = detail::random_tensor({1, 2, 4, 4}, rng, 2.0, 3.0);
  std::vector<Check> checks{
      {"add", [&] { return readout(add(a, b)); }, {{"a", a}, {"b", b}}},
      {"sub", [&] { return readout(sub(a, b)); }, {{"a", a}, {"b", b}}},
      {"mul", [&] { return readout(mul(a, b)); }, {{"a", a}, {"b", b}}},
      {"scale", [&] { return readout(scale(a, -1.7)); }, {{"a", a}}},
      {"add_scalar", [&] { return readout(add_scalar(a, 0.3)); }, {{"a", a}}},
      {"abs", [&] { return readout(tc::abs(a)); }, {{"a", a}}},
      {"sigmoid", [&] { return readout(sigmoid(a)); }, {{"a", a}}},
      {"prelu", [&] { return readout(prelu(a, slope)); }, {{"a", a}, {"slope", slope}}},
      {"mul_channels", [&] { return readout(mul_channels(a, m)); }, {{"a", a}, {"m", m}}},
      {"mean_channels", [&] { return readout(mean_channels(a)); }, {{"a", a}}},
      {"concat_channels", [&] { return readout(concat_channels({a, m, b})); }, {{"a", a}, {"m", m}, {"b", b}}},
      {"mean", [&] { return small(mean(mul(a, a))); }, {{"a", a}}},
      {"l1_loss", [&] { return small(l1_loss(a, target)); }, {{"a", a}}},
      {"tv_loss", [&] { return small(tv_loss(a)); }, {{"a", a}}},
      {"conv2d 3x3", [&] { return readout(conv2d(a, w3, b3, {1, 1})); }, {{"x", a}, {"w", w3}, {"b", b3}}},
      {"conv2d 3x3 wide", [&] { return readout(conv2d(a, w6, b6, {1, 1})); }, {{"x", a}, {"w", w6}, {"b", b6}}},
      {"conv2d 12/8/2", [&] { return readout(conv2d(hr, wp, bp, {8, 2})); }, {{"x", hr}, {"w", wp}, {"b", bp}}},
      {"conv_transpose2d 12/8/2",
       [&] { return readout(conv_transpose2d(lr, wp, bp, {8, 2})); },
       {{"x", lr}, {"w", wp}, {"b", bp}}},
  };

  // Toy networks: C2, one residual block, N = 2, n = 2 on 6x6 coarse slices.
  std::vector<Prbpn> nets;
  std::vector<std::vector<Var>> windows;
  std::vector<Tensor> targets;
  for (bool dwtf : {true, false}) {
    PrbpnConfig cfg;
    cfg.base_channels = 2;
    cfg.resblocks = 1;
    cfg.refine_iters = 2;
    cfg.context_radius = 2;
    cfg.dwtf = dwtf;
    Prbpn net(cfg);
    net.initialize(13);
    Rng r(13);
    for (auto& [name, p] : net.parameters())
      if (name.find(".bias") != std::string::npos)
        for (auto& v : const_cast<Var&>(p).mutable_value().values()) v = r.uniform(-0.1, 0.1);
    std::vector<Var> win;
    for (int k = 0; k < cfg.window_length(); ++k) win.emplace_back(detail::random_tensor({1, 1, 6, 6}, r, 0.0, 1.0));
    Tensor hr_t;
    {
      NoGradGuard no_grad;
      hr_t = net.forward(win).value();
    }
    // keep every L1 term away from its kink
    for (auto& v : hr_t.values()) v += (r.coin() ? 1.0 : -1.0) * r.uniform(0.002, 0.004);
    nets.push_back(std::move(net));
    windows.push_back(std::move(win));
    targets.push_back(std::move(hr_t));
  }
  for (std::size_t k = 0; k < nets.size(); ++k) {
    const Prbpn& net = nets[k];
    const auto& win = windows[k];
    const auto& t = targets[k];
    checks.push_back({k == 0 ? "network forward + loss" : "network forward + loss (no DWTF)",
                      [&net, &win, &t] { return Prbpn::loss(net.forward(win), t, net.config().beta); },
                      {net.parameters().begin(), net.parameters().end()}});
  }

  double worst = 0.0;
  std::string failing;
  for (auto& c : checks) {
    const auto r = grad_check(c.f, c.inputs);
    worst = std::max(worst, r.max_rel_error);
    if (!(r.max_rel_error < tolerance)) {
      failing += (failing.empty() ? "" : "; ") + c.name + " (" + r.worst + " err " + detail::fmt(r.max_rel_error) + ")";
    }
  }
  CheckOutcome o{"gradients", failing.empty(), worst, tolerance,
                 failing.empty() ? std::to_string(checks.size()) + " checks" : "failing: " + failing};
  return o;
}

/// compute_metrics against a plain two-pass reference on random data.
inline CheckOutcome metrics_oracle(double tolerance = 1e-12, std::uint64_t seed = 11) {
  Rng rng(seed);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng.below(500);
    std::vector<double> y(n), yh(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = rng.uniform(-120.0, -5.0);
      yh[i] = y[i] + rng.uniform(-8.0, 8.0);
    }
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(n);
    double abs_sum = 0.0, pct_sum = 0.0, sq = 0.0, tot = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = y[i] - yh[i];
      abs_sum += std::abs(e);
      pct_sum += std::abs(e / y[i]);
      sq += e * e;
      tot += (y[i] - mean) * (y[i] - mean);
    }
    const double mae = abs_sum / n, mape = 100.0 * pct_sum / n, rmse = std::sqrt(sq / n), r2 = 1.0 - sq / tot;
    const auto got = compute_metrics(y, yh);
    for (auto [a, b] : {std::pair{got.mae, mae}, {got.mape, mape}, {got.rmse, rmse}, {got.r2, r2}})
      worst = std::max(worst, std::abs(a - b) / std::max(std::abs(b), 1.0));
  }
  return detail::below("metrics oracle", worst, tolerance, "20 random sets");
}

/// The fast suites, in the order `tunnelwave selfcheck` prints them.
inline std::vector<CheckOutcome> run_all() {
  return {beam_oracle(), unitarity(), wall_screen(), adjoint(), gradients(), metrics_oracle()};
}

}  // namespace tunnelwave::selfcheck
