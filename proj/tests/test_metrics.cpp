// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tunnelwave Authors

#include <catch_amalgamated.hpp>

#include <tunnelwave/dataset.hpp>
#include <tunnelwave/metrics.hpp>

#include <cmath>
#include <numeric>

using namespace tunnelwave;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Straight transcription of the four formulas, written separately from the
// library (two passes, no shared accumulators).
struct Naive {
  double mae, mape, rmse, r2;
};

Naive naive_metrics(const std::vector<double>& y, const std::vector<double>& yh) {
  const double n = static_cast<double>(y.size());
  const double ybar = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double mae = 0, mse = 0, mape = 0, tot = 0;
  for (std::size_t i = 0; i < y.size(); ++i) mae += std::fabs(yh[i] - y[i]) / n;
  for (std::size_t i = 0; i < y.size(); ++i) mse += (yh[i] - y[i]) * (yh[i] - y[i]);
  for (std::size_t i = 0; i < y.size(); ++i) mape += std::fabs((yh[i] - y[i]) / y[i]);
  for (std::size_t i = 0; i < y.size(); ++i) tot += (y[i] - ybar) * (y[i] - ybar);
  return {mae, 100.0 * mape / n, std::sqrt(mse / n), 1.0 - mse / tot};
}

std::pair<std::vector<double>, std::vector<double>> random_fields(Rng& rng, std::size_t n) {
  std::vector<double> y(n), yh(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = rng.uniform(-120.0, -20.0);
    yh[i] = y[i] + rng.uniform(-3.0, 3.0);
  }
  return {y, yh};
}

RssVolume constant_volume(float value) {
  RssVolume v;
  v.section = make_cross_section(TunnelShape::rectangular, 4.0, 4.0);
  v.grid = GridSpec{10, 10, 0.5, -2.25, -0.25};
  v.config = PweConfig::standard(0.9e9, 20.0, {5.0, 0.01}, {0.0, 1.0}, kCoarseMeshFactor);
  v.nz = static_cast<int>(v.config.slice_count());
  v.values.assign(v.grid.cells() * v.nz, value);
  return v;
}

}  // namespace

TEST_CASE("perfect prediction") {
  const std::vector<double> y{-40, -55, -61.5, -70};
  const auto m = compute_metrics(y, y);
  CHECK(m.mae == 0.0);
  CHECK(m.mape == 0.0);
  CHECK(m.rmse == 0.0);
  CHECK(m.r2 == 1.0);
  CHECK(m.n_points == 4);
  CHECK(m.excluded_points == 0);
}

TEST_CASE("hand-computed example") {
  const std::vector<double> y{1, 2, 3}, yh{1.1, 1.9, 3.3};
  const auto m = compute_metrics(y, yh);
  CHECK_THAT(m.mae, WithinAbs(0.5 / 3.0, 1e-12));
  CHECK_THAT(m.mape, WithinAbs(100.0 * (0.1 + 0.05 + 0.1) / 3.0, 1e-12));
  CHECK_THAT(m.rmse, WithinAbs(std::sqrt(0.11 / 3.0), 1e-12));
  CHECK_THAT(m.r2, WithinAbs(0.945, 1e-12));
  CHECK_THAT(m.mape, WithinAbs(8.3333, 1e-4));
  CHECK_THAT(m.rmse, WithinAbs(0.191485, 1e-6));
}

TEST_CASE("matches a naive re-implementation to 1e-12") {
  Rng rng(31);
  for (std::size_t n : {2u, 7u, 100u, 4096u}) {
    auto [y, yh] = random_fields(rng, n);
    const auto m = compute_metrics(y, yh);
    const auto ref = naive_metrics(y, yh);
    CHECK_THAT(m.mae, WithinAbs(ref.mae, 1e-12));
    CHECK_THAT(m.mape, WithinAbs(ref.mape, 1e-12));
    CHECK_THAT(m.rmse, WithinAbs(ref.rmse, 1e-12));
    CHECK_THAT(m.r2, WithinAbs(ref.r2, 1e-12));
  }
}

TEST_CASE("metric identities") {
  Rng rng(32);
  for (int trial = 0; trial < 50; ++trial) {
    auto [y, yh] = random_fields(rng, 1 + rng.below(200) + 1);
    const auto m = compute_metrics(y, yh);
    CHECK(m.rmse >= m.mae);
    CHECK(m.mae >= 0.0);
    CHECK(m.r2 <= 1.0);
    CHECK(m.r2 < 1.0);  // y_hat != y somewhere
  }
}

TEST_CASE("common offset leaves MAE and RMSE but moves MAPE and R2") {
  Rng rng(33);
  auto [y, yh] = random_fields(rng, 300);
  const auto base = compute_metrics(y, yh);
  for (double c : {-30.0, 25.0}) {
    std::vector<double> ys = y, yhs = yh;
    for (auto& v : ys) v += c;
    for (auto& v : yhs) v += c;
    const auto shifted = compute_metrics(ys, yhs);
    CHECK_THAT(shifted.mae, WithinRel(base.mae, 1e-10));
    CHECK_THAT(shifted.rmse, WithinRel(base.rmse, 1e-10));
    // R2 only changes through round-off, MAPE through the denominators
    CHECK(shifted.mape != base.mape);
    CHECK(std::abs(shifted.mape - base.mape) > 0.1 * base.mape);
  }
  // scaling the spread does move R2
  std::vector<double> squeezed = y, squeezed_h = yh;
  for (std::size_t i = 0; i < y.size(); ++i) {
    squeezed[i] = 0.5 * y[i];
    squeezed_h[i] = squeezed[i] + (yh[i] - y[i]);
  }
  CHECK(compute_metrics(squeezed, squeezed_h).r2 < base.r2);
}

TEST_CASE("zero guard and error cases") {
  const std::vector<double> y{0.0, -10.0, -20.0}, yh{0.5, -11.0, -19.0};
  const auto m = compute_metrics(y, yh);
  CHECK(m.excluded_points == 1);
  CHECK_THAT(m.mape, WithinAbs(100.0 * (0.1 + 0.05) / 2.0, 1e-12));
  CHECK_THAT(m.mae, WithinAbs(2.5 / 3.0, 1e-12));

  CHECK_THROWS_WITH(compute_metrics(std::vector<double>{0.0, 1e-7}, std::vector<double>{1.0, 1.0}),
                    ContainsSubstring("zero guard"));
  CHECK_THROWS_WITH(compute_metrics(std::vector<double>{-5.0, -5.0}, std::vector<double>{-4.0, -6.0}),
                    ContainsSubstring("constant"));
  CHECK_THROWS_AS(compute_metrics(std::vector<double>{1.0}, std::vector<double>{1.0}), InvalidArgument);
  CHECK_THROWS_AS(compute_metrics(std::vector<double>{1.0, 2.0}, std::vector<double>{1.0}), InvalidArgument);
}

TEST_CASE("grouping averages within (shape, frequency) and orders rows") {
  const std::vector<double> y{1, 2, 3};
  const auto perfect = compute_metrics(y, y);
  const auto off = compute_metrics(y, std::vector<double>{1.1, 1.9, 3.3});
  const GroupKey a{TunnelShape::rectangular, 2.4e9}, b{TunnelShape::rectangular, 0.9e9};
  const auto table = group_metrics({{a, off}, {b, perfect}, {a, perfect}});
  REQUIRE(table.rows.size() == 2);
  CHECK(table.rows.begin()->first == b);
  CHECK(table.rows.at(b).r2 == 1.0);
  CHECK_THAT(table.rows.at(a).mae, WithinAbs(0.5 * off.mae, 1e-15));
  CHECK(table.pair_counts.at(a) == 2);
  CHECK(table.rows.at(a).n_points == 6);

  const auto j = table.to_json();
  REQUIRE(j.size() == 2);
  CHECK(j[0]["frequency_ghz"].get<double>() == 0.9);
  CHECK(j[1]["metrics"].get<MetricsRecord>().mae == table.rows.at(a).mae);

  const auto text = table.to_text();
  CHECK_THAT(text, ContainsSubstring("0.9 GHz"));
  CHECK_THAT(text, ContainsSubstring("2.4 GHz"));
  for (const char* row : {"MAE (dB)", "MAPE (%)", "RMSE (dB)", "R2"}) CHECK_THAT(text, ContainsSubstring(row));
  // every line of a block has the same width
  std::istringstream lines(text);
  std::string line;
  std::size_t width = 0;
  while (std::getline(lines, line)) {
    if (width == 0) width = line.size();
    CHECK(line.size() == width);
  }
}

TEST_CASE("axial curve of a constant volume") {
  const auto v = constant_volume(-42.5f);
  const auto curve = axial_curve(v, 0.3, 1.2);
  REQUIRE(curve.size() == static_cast<std::size_t>(v.nz));
  for (std::size_t t = 0; t < curve.size(); ++t) {
    CHECK(curve[t].rss_db == -42.5);
    CHECK(curve[t].z == v.z_of(static_cast<int>(t)));
  }
  CHECK_THROWS_AS(axial_curve(v, 2.5, 1.0), InvalidArgument);
  CHECK_THROWS_AS(axial_curve(v, 0.0, -0.1), InvalidArgument);
  const auto csv = axial_csv(curve);
  CHECK(csv.rfind("z,rss_db\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == v.nz + 1);
}

TEST_CASE("axial curve picks the nearest cell") {
  auto v = constant_volume(0.0f);
  for (int t = 0; t < v.nz; ++t) {
    auto s = v.slice(t);
    for (int j = 0; j < v.grid.ny; ++j)
      for (int i = 0; i < v.grid.nx; ++i) s[static_cast<std::size_t>(j) * v.grid.nx + i] = float(100 * i + j);
  }
  // x = 0.3 -> i = round((0.3 + 2.25) / 0.5) = 5; y = 1.2 -> j = round(1.45 / 0.5) = 3
  CHECK(axial_curve(v, 0.3, 1.2).front().rss_db == 503.0);
}

TEST_CASE("lossy walls give a decreasing trend in 100 m window means") {
  auto section = make_cross_section(TunnelShape::rectangular, 4.0, 4.0);
  auto cfg = PweConfig::standard(0.9e9, 600.0, {5.0, 0.1}, {0.5, 1.5}, kCoarseMeshFactor);
  const auto grids = paired_grids(cfg.frequency, section, default_guard_band(cfg.frequency));
  const auto volume = march(cfg, section, grids.coarse, rasterize_mask(section, grids.coarse));
  const auto means = windowed_means(axial_curve(volume, 0.0, 2.0), 100.0);
  REQUIRE(means.size() >= 5);
  INFO("first " << means.front() << " last " << means.back());
  CHECK(means.back() < means.front());
  // least-squares slope over the window index
  const double n = static_cast<double>(means.size());
  double sx = 0, sy = 0, sxy = 0, sxx = 0;
  for (std::size_t k = 0; k < means.size(); ++k) {
    sx += k;
    sy += means[k];
    sxy += k * means[k];
    sxx += double(k) * k;
  }
  CHECK((n * sxy - sx * sy) / (n * sxx - sx * sx) < 0.0);
}
