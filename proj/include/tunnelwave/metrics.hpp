// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tunnelwave Authors
#pragma once

#include <tunnelwave/error.hpp>
#include <tunnelwave/geometry.hpp>
#include <tunnelwave/pwe.hpp>
#include <tunnelwave/serialization.hpp>

#include <cmath>
#include <cstdio>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace tunnelwave {

/// Error metrics on dB values. MAPE is in percent.
struct MetricsRecord {
  double mae = 0.0;
  double mape = 0.0;
  double rmse = 0.0;
  double r2 = 0.0;
  std::size_t n_points = 0;
  std::size_t excluded_points = 0;  // |y| below the MAPE zero guard
};

inline constexpr double kMapeZeroGuardDb = 1e-6;

inline void to_json(Json& j, const MetricsRecord& m) {
  j = Json{{"mae", m.mae},   {"mape", m.mape},         {"rmse", m.rmse},
           {"r2", m.r2},     {"n_points", m.n_points}, {"excluded_points", m.excluded_points}};
}

inline void from_json(const Json& j, MetricsRecord& m) {
  m.mae = j.at("mae").get<double>();
  m.mape = j.at("mape").get<double>();
  m.rmse = j.at("rmse").get<double>();
  m.r2 = j.at("r2").get<double>();
  m.n_points = j.at("n_points").get<std::size_t>();
  m.excluded_points = j.at("excluded_points").get<std::size_t>();
}

/// MAE, MAPE, RMSE and R^2 of predictions `y_hat` against reference `y`.
inline MetricsRecord compute_metrics(std::span<const double> y, std::span<const double> y_hat) {
  if (y.size() != y_hat.size()) {
    throw InvalidArgument("metrics: " + std::to_string(y.size()) + " references vs " + std::to_string(y_hat.size()) +
                          " predictions");
  }
  if (y.size() < 2) throw InvalidArgument("metrics: need at least 2 points");
  MetricsRecord m;
  m.n_points = y.size();
  double abs_sum = 0.0, sq_sum = 0.0, pct_sum = 0.0, mean = 0.0;
  std::size_t pct_n = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = y[i] - y_hat[i];
    abs_sum += std::abs(e);
    sq_sum += e * e;
    mean += y[i];
    if (std::abs(y[i]) < kMapeZeroGuardDb) {
      ++m.excluded_points;
    } else {
      pct_sum += std::abs(e / y[i]);
      ++pct_n;
    }
  }
  if (pct_n == 0) throw NumericError("metrics: every reference value is within the MAPE zero guard");
  mean /= static_cast<double>(y.size());
  double ss_tot = 0.0;
  for (double v : y) ss_tot += (v - mean) * (v - mean);
  if (ss_tot == 0.0) throw NumericError("metrics: R^2 undefined for a constant reference");
  const double n = static_cast<double>(y.size());
  m.mae = abs_sum / n;
  m.rmse = std::sqrt(sq_sum / n);
  m.mape = 100.0 * pct_sum / static_cast<double>(pct_n);
  m.r2 = 1.0 - sq_sum / ss_tot;
  return m;
}

/// Unweighted mean of records (point counts are summed).
inline MetricsRecord average(const std::vector<MetricsRecord>& records) {
  if (records.empty()) throw InvalidArgument("metrics: nothing to average");
  MetricsRecord a;
  for (const auto& r : records) {
    a.mae += r.mae;
    a.mape += r.mape;
    a.rmse += r.rmse;
    a.r2 += r.r2;
    a.n_points += r.n_points;
    a.excluded_points += r.excluded_points;
  }
  const double n = static_cast<double>(records.size());
  a.mae /= n;
  a.mape /= n;
  a.rmse /= n;
  a.r2 /= n;
  return a;
}

// ---------------------------------------------------------------------------
// Grouped tables

struct GroupKey {
  TunnelShape shape = TunnelShape::rectangular;
  double frequency = 0.0;  // Hz

  auto operator<=>(const GroupKey&) const = default;
};

struct MetricsTable {
  std::map<GroupKey, MetricsRecord> rows;
  std::map<GroupKey, std::size_t> pair_counts;

  Json to_json() const {
    Json j = Json::array();
    for (const auto& [key, rec] : rows) {
      j.push_back({{"shape", std::string(to_string(key.shape))},
                   {"frequency_ghz", key.frequency / 1e9},
                   {"pairs", pair_counts.at(key)},
                   {"metrics", rec}});
    }
    return j;
  }

  /// One block per shape; rows MAE / MAPE / RMSE / R^2, one column per frequency.
  std::string to_text() const {
    std::ostringstream out;
    std::map<TunnelShape, std::vector<std::pair<double, MetricsRecord>>> by_shape;
    for (const auto& [key, rec] : rows) by_shape[key.shape].push_back({key.frequency, rec});
    char buf[64];
    for (const auto& [shape, cols] : by_shape) {
      std::snprintf(buf, sizeof buf, "%-12s", std::string(to_string(shape)).c_str());
      out << buf;
      for (const auto& [f, rec] : cols) {
        std::snprintf(buf, sizeof buf, "%12s", (format_ghz(f) + " GHz").c_str());
        out << buf;
      }
      out << "\n";
      auto row = [&](const char* label, auto get) {
        std::snprintf(buf, sizeof buf, "%-12s", label);
        out << buf;
        for (const auto& [f, rec] : cols) {
          std::snprintf(buf, sizeof buf, "%12.4f", get(rec));
          out << buf;
        }
        out << "\n";
      };
      row("MAE (dB)", [](const MetricsRecord& r) { return r.mae; });
      row("MAPE (%)", [](const MetricsRecord& r) { return r.mape; });
      row("RMSE (dB)", [](const MetricsRecord& r) { return r.rmse; });
      row("R2", [](const MetricsRecord& r) { return r.r2; });
    }
    return out.str();
  }

 private:
  static std::string format_ghz(double f) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", f / 1e9);
    return buf;
  }
};

/// Averages per-pair records within (shape, frequency) groups.
inline MetricsTable group_metrics(const std::vector<std::pair<GroupKey, MetricsRecord>>& per_pair) {
  std::map<GroupKey, std::vector<MetricsRecord>> groups;
  for (const auto& [key, rec] : per_pair) groups[key].push_back(rec);
  MetricsTable t;
  for (const auto& [key, recs] : groups) {
    t.rows[key] = average(recs);
    t.pair_counts[key] = recs.size();
  }
  return t;
}

// ---------------------------------------------------------------------------
// Axial curves

struct AxialPoint {
  double z = 0.0;
  double rss_db = 0.0;
};

/// Nearest-cell RSS at receiver (x, y) for every slice.
inline std::vector<AxialPoint> axial_curve(const RssVolume& volume, double rx_x, double rx_y) {
  if (!volume.section.contains(rx_x, rx_y)) {
    throw InvalidArgument("axial_curve: receiver (" + std::to_string(rx_x) + ", " + std::to_string(rx_y) +
                          ") is outside the cross-section");
  }
  const auto [i, j] = volume.grid.nearest(rx_x, rx_y);
  std::vector<AxialPoint> out;
  out.reserve(static_cast<std::size_t>(volume.nz));
  for (int t = 0; t < volume.nz; ++t) out.push_back({volume.z_of(t), volume.at(t, i, j)});
  return out;
}

inline std::string axial_csv(const std::vector<AxialPoint>& curve) {
  std::string s = "z,rss_db\n";
  char buf[64];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f\n", p.z, p.rss_db);
    s += buf;
  }
  return s;
}

/// Means of consecutive windows of `window_m` metres along z.
inline std::vector<double> windowed_means(const std::vector<AxialPoint>& curve, double window_m) {
  std::vector<double> means;
  if (curve.empty()) return means;
  const double z0 = curve.front().z;
  double acc = 0.0;
  int n = 0, bin = 0;
  for (const auto& p : curve) {
    const int b = static_cast<int>((p.z - z0) / window_m);
    if (b != bin && n > 0) {
      means.push_back(acc / n);
      acc = 0.0;
      n = 0;
    }
    bin = b;
    acc += p.rss_db;
    ++n;
  }
  if (n > 0) means.push_back(acc / n);
  return means;
}

}  // namespace tunnelwave
