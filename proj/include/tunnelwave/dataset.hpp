// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tunnelwave Authors
#pragma once

#include <tunnelwave/binary_io.hpp>
#include <tunnelwave/error.hpp>
#include <tunnelwave/geometry.hpp>
#include <tunnelwave/pwe.hpp>
#include <tunnelwave/rng.hpp>
#include <tunnelwave/serialization.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace tunnelwave {

// ---------------------------------------------------------------------------
// Parameter grids and split filters

struct ParamGrid {
  std::vector<TunnelShape> shapes;
  std::vector<double> frequencies;  // Hz
  std::vector<double> eps_r;
  std::vector<double> sigma;  // S/m
  std::vector<double> tx_x;   // m, offset from the axis
  std::vector<double> tx_y;   // m, above the floor

  std::size_t size() const {
    return shapes.size() * frequencies.size() * eps_r.size() * sigma.size() * tx_x.size() * tx_y.size();
  }
};

/// Inclusive arithmetic range lo, lo+step, ..., hi (rounded to 1e-9).
inline std::vector<double> stepped(double lo, double hi, double step) {
  std::vector<double> v;
  const int n = static_cast<int>(std::floor((hi - lo) / step + 1e-9));
  for (int k = 0; k <= n; ++k) v.push_back(std::round((lo + k * step) * 1e9) / 1e9);
  return v;
}

inline std::vector<TunnelShape> all_shapes() {
  return {TunnelShape::rectangular, TunnelShape::arched, TunnelShape::arched_vertical_walls, TunnelShape::trapezoidal};
}

inline std::vector<double> ghz(std::vector<double> v) {
  for (auto& f : v) f *= 1e9;
  return v;
}

/// Full simulation grid: shapes 1-4, 0.9-5.9 GHz in 1 GHz steps, eps_r 5-10,
/// three conductivities, 11 x 5 transmitter positions.
inline ParamGrid table1_grid() {
  return {all_shapes(),          ghz(stepped(0.9, 5.9, 1.0)), stepped(5.0, 10.0, 2.5), {0.001, 0.01, 0.1},
          stepped(0.0, 2.0, 0.2), stepped(0.5, 2.5, 0.5)};
}

/// Same axes with the frequencies used for the figures and result tables.
inline ParamGrid figures_grid() {
  auto g = table1_grid();
  g.frequencies = ghz({0.9, 2.4, 4.9, 5.8});
  return g;
}

/// Long-tunnel validation setup: 0.9 and 2.1 GHz, eps_r 5, sigma 0.01.
inline ParamGrid massif_grid() {
  return {{TunnelShape::arched_vertical_walls}, ghz({0.9, 2.1}), {5.0}, {0.01}, stepped(0.0, 2.0, 0.5),
          stepped(0.5, 3.0, 0.5)};
}

inline constexpr double kMassifLength = 2500.0;

enum class Split { train, test, all };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::test: return "test";
    case Split::all: return "all";
  }
  return "all";
}

inline Split split_from_string(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  if (s == "all") return Split::all;
  throw InvalidArgument("unknown split '" + std::string(s) + "'");
}

/// Transmitter-position filter of the disjoint train/test regimes.
inline bool in_split(const Transmitter& tx, Split split) {
  constexpr double eps = 1e-9;
  auto within = [](double v, double lo, double hi) { return v >= lo - eps && v <= hi + eps; };
  switch (split) {
    case Split::train: return within(tx.x, 0.0, 1.0) && within(tx.y, 0.5, 1.0);
    case Split::test: return within(tx.x, 1.2, 2.0) && within(tx.y, 2.0, 2.5);
    case Split::all: return true;
  }
  return false;
}

/// One tunnel configuration: section plus marching parameters. The mesh
/// factor of `pwe` is chosen per run by `generate_pair`.
struct TunnelCase {
  CrossSection section;
  PweConfig pwe;
};

inline void to_json(Json& j, const TunnelCase& c) { j = Json{{"section", c.section}, {"config", c.pwe}}; }
inline void from_json(const Json& j, TunnelCase& c) {
  c.section = j.at("section").get<CrossSection>();
  c.pwe = j.at("config").get<PweConfig>();
}

struct CaseDefaults {
  double width = 4.0;
  double height = 4.0;
  SectionExtras extras;
  double length = 1000.0;
  bool absorber = true;
};

/// Cartesian product of the grid axes in lexicographic order
/// (shape, frequency, eps_r, sigma, tx_x, tx_y), filtered by split.
inline std::vector<TunnelCase> enumerate_configs(const ParamGrid& grid, Split split, const CaseDefaults& defaults = {}) {
  if (grid.size() == 0) throw InvalidArgument("parameter grid has an empty axis");
  std::vector<TunnelCase> out;
  for (auto shape : grid.shapes) {
    const auto section = make_cross_section(shape, defaults.width, defaults.height, defaults.extras);
    for (double f : grid.frequencies)
      for (double eps : grid.eps_r)
        for (double sig : grid.sigma)
          for (double x : grid.tx_x)
            for (double y : grid.tx_y) {
              const Transmitter tx{x, y};
              if (!in_split(tx, split)) continue;
              auto pwe = PweConfig::standard(f, defaults.length, {eps, sig}, tx, kFineMeshFactor);
              pwe.absorber = defaults.absorber;
              out.push_back({section, pwe});
            }
  }
  if (out.empty()) {
    throw InvalidArgument("no configuration passes the '" + std::string(to_string(split)) + "' transmitter filter");
  }
  return out;
}

/// `count` items at evenly spaced indices k * size / count (all items when
/// count >= size), preserving order.
template <typename T>
std::vector<T> spread_subset(const std::vector<T>& items, std::size_t count) {
  if (count == 0) throw InvalidArgument("spread_subset: count must be positive");
  if (count >= items.size()) return items;
  std::vector<T> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) out.push_back(items[k * items.size() / count]);
  return out;
}

// ---------------------------------------------------------------------------
// Paired coarse/fine simulation

struct VolumePair {
  RssVolume coarse;
  RssVolume fine;
};

struct PairOptions {
  /// Recorded window = section bounding box + this many coarse cells; negative records the full grid.
  int roi_margin = 2;
};

inline VolumePair generate_pair(const TunnelCase& c, const PairOptions& options = {}) {
  const double guard = default_guard_band(c.pwe.frequency);
  const auto grids = paired_grids(c.pwe.frequency, c.section, guard);
  std::optional<CellWindow> wc, wf;
  if (options.roi_margin >= 0) {
    wc = section_window(c.section, grids.coarse, options.roi_margin);
    wf = wc->scaled(kMeshRatio);
  }
  PweConfig coarse_cfg = c.pwe;
  coarse_cfg.mesh_factor = kCoarseMeshFactor;
  PweConfig fine_cfg = c.pwe;
  fine_cfg.mesh_factor = kFineMeshFactor;
  VolumePair p;
  p.coarse = march(coarse_cfg, c.section, grids.coarse, rasterize_mask(c.section, grids.coarse), wc);
  p.fine = march(fine_cfg, c.section, grids.fine, rasterize_mask(c.section, grids.fine), wf);
  return p;
}

/// Runs `job(i)` for i in [0, count) on up to `workers` threads. The first
/// exception is rethrown after all workers stop.
inline void parallel_for(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& job) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < count;) {
      try {
        job(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = count;
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Normalisation

inline void check_stats(const NormStats& s) {
  if (!std::isfinite(s.min_db) || !std::isfinite(s.max_db) || !(s.max_db > s.min_db)) {
    throw NumericError("degenerate normalisation range [" + std::to_string(s.min_db) + ", " +
                       std::to_string(s.max_db) + "]");
  }
}

inline float normalize_value(double v, const NormStats& s) {
  return static_cast<float>(std::clamp((v - s.min_db) / (s.max_db - s.min_db), 0.0, 1.0));
}

inline double denormalize_value(double v01, const NormStats& s) { return s.min_db + v01 * (s.max_db - s.min_db); }

/// Maps dB values to [0, 1]. Without `stats`, the bounds are the interior
/// min/max of the volume itself.
inline std::pair<RssVolume, NormStats> normalize(const RssVolume& volume, std::optional<NormStats> stats = std::nullopt) {
  const NormStats s = stats.value_or(interior_range(volume));
  check_stats(s);
  RssVolume out = volume;
  for (auto& v : out.values) {
    if (!std::isfinite(v)) throw NumericError("normalize: non-finite value in volume");
    v = normalize_value(v, s);
  }
  out.stats = s;
  return {std::move(out), s};
}

inline RssVolume denormalize(const RssVolume& volume01, const NormStats& stats) {
  check_stats(stats);
  RssVolume out = volume01;
  for (auto& v : out.values) v = static_cast<float>(denormalize_value(v, stats));
  out.stats = stats;
  return out;
}

/// Interior min/max pooled over the coarse and fine members of every pair.
inline NormStats pooled_stats(const std::vector<VolumePair>& pairs) {
  NormStats s{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& p : pairs)
    for (const RssVolume* v : {&p.coarse, &p.fine}) {
      const auto r = interior_range(*v);
      s.min_db = std::min(s.min_db, r.min_db);
      s.max_db = std::max(s.max_db, r.max_db);
    }
  check_stats(s);
  return s;
}

// ---------------------------------------------------------------------------
// Training windows and augmentation

/// Single-channel image, row-major with x fastest.
struct Image {
  int w = 0;
  int h = 0;
  std::vector<float> px;

  float& at(int i, int j) { return px[static_cast<std::size_t>(j) * w + i]; }
  float at(int i, int j) const { return px[static_cast<std::size_t>(j) * w + i]; }
  bool operator==(const Image&) const = default;
};

inline Image slice_image(const RssVolume& v, int t) {
  auto s = v.slice(t);
  return {v.grid.nx, v.grid.ny, std::vector<float>(s.begin(), s.end())};
}

/// Coarse slices t-n..t+n and the fine slice t.
struct SamplePair {
  std::vector<Image> coarse;
  Image fine;
  int t = 0;

  int radius() const { return static_cast<int>(coarse.size() / 2); }
  const Image& target() const { return coarse[coarse.size() / 2]; }
  bool operator==(const SamplePair&) const = default;
};

/// Coarse slices t-n..t+n; indices past either end repeat the end slice.
inline std::vector<Image> coarse_window(const RssVolume& coarse01, int t, int n) {
  if (t < 0 || t >= coarse01.nz) throw InvalidArgument("window: t out of range");
  if (n < 0) throw InvalidArgument("window: negative context radius");
  std::vector<Image> out;
  for (int k = t - n; k <= t + n; ++k) out.push_back(slice_image(coarse01, std::clamp(k, 0, coarse01.nz - 1)));
  return out;
}

inline SamplePair window(const RssVolume& coarse01, const RssVolume& fine01, int t, int n) {
  if (coarse01.nz != fine01.nz) throw InvalidArgument("window: coarse and fine slice counts differ");
  if (fine01.grid.nx != kMeshRatio * coarse01.grid.nx || fine01.grid.ny != kMeshRatio * coarse01.grid.ny) {
    throw InvalidArgument("window: fine grid must be 8x the coarse grid");
  }
  SamplePair p;
  p.t = t;
  p.coarse = coarse_window(coarse01, t, n);
  p.fine = slice_image(fine01, t);
  return p;
}

inline Image mirror_x(const Image& im) {
  Image o = im;
  for (int j = 0; j < im.h; ++j)
    for (int i = 0; i < im.w; ++i) o.at(i, j) = im.at(im.w - 1 - i, j);
  return o;
}

inline Image rotate180(const Image& im) {
  Image o = im;
  for (int j = 0; j < im.h; ++j)
    for (int i = 0; i < im.w; ++i) o.at(i, j) = im.at(im.w - 1 - i, im.h - 1 - j);
  return o;
}

inline Image crop(const Image& im, int i0, int j0, int w, int h) {
  Image o{w, h, std::vector<float>(static_cast<std::size_t>(w) * h)};
  for (int j = 0; j < h; ++j)
    for (int i = 0; i < w; ++i) o.at(i, j) = im.at(i0 + i, j0 + j);
  return o;
}

inline SamplePair map_pair(const SamplePair& p, const std::function<Image(const Image&)>& f) {
  SamplePair o;
  o.t = p.t;
  for (const auto& c : p.coarse) o.coarse.push_back(f(c));
  o.fine = f(p.fine);
  return o;
}

inline SamplePair flip_horizontal(const SamplePair& p) { return map_pair(p, mirror_x); }
inline SamplePair rotate_half_turn(const SamplePair& p) { return map_pair(p, rotate180); }

/// Crop size in coarse cells.
struct CropSize {
  int w = 0;
  int h = 0;
};

/// Crop whose coarse origin is uniform (x drawn first, then y); the fine crop
/// is the matching 8x region. The default size is the full slice.
inline SamplePair random_crop(const SamplePair& pair, Rng& rng, std::optional<CropSize> crop_size = std::nullopt) {
  if (pair.coarse.empty()) throw InvalidArgument("crop: empty window");
  const int cw = pair.coarse.front().w, ch = pair.coarse.front().h;
  if (pair.fine.w != kMeshRatio * cw || pair.fine.h != kMeshRatio * ch) {
    throw InvalidArgument("crop: fine target must be 8x the coarse slices");
  }
  const CropSize size = crop_size.value_or(CropSize{cw, ch});
  if (size.w < 1 || size.h < 1 || size.w > cw || size.h > ch) {
    throw InvalidArgument("crop " + std::to_string(size.w) + "x" + std::to_string(size.h) + " does not fit in " +
                          std::to_string(cw) + "x" + std::to_string(ch) + " slices");
  }
  const int i0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(cw - size.w + 1)));
  const int j0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(ch - size.h + 1)));
  SamplePair cropped;
  cropped.t = pair.t;
  for (const auto& c : pair.coarse) cropped.coarse.push_back(crop(c, i0, j0, size.w, size.h));
  cropped.fine = crop(pair.fine, kMeshRatio * i0, kMeshRatio * j0, kMeshRatio * size.w, kMeshRatio * size.h);
  return cropped;
}

/// Random x-mirror and half-turn (each with probability 1/2), then
/// `random_crop`. RNG draws, in order: mirror coin, rotation coin, crop x, crop y.
inline SamplePair augment(const SamplePair& pair, Rng& rng, std::optional<CropSize> crop_size = std::nullopt) {
  if (pair.coarse.empty()) throw InvalidArgument("augment: empty window");
  if (pair.fine.w != kMeshRatio * pair.coarse.front().w || pair.fine.h != kMeshRatio * pair.coarse.front().h) {
    throw InvalidArgument("augment: fine target must be 8x the coarse slices");
  }
  SamplePair out = pair;
  if (rng.coin()) out = flip_horizontal(out);
  if (rng.coin()) out = rotate_half_turn(out);
  return random_crop(out, rng, crop_size);
}

/// Window t of a dB pair, normalised slice by slice with `stats`.
inline SamplePair normalized_window(const VolumePair& pair_db, const NormStats& stats, int t, int n) {
  check_stats(stats);
  SamplePair p = window(pair_db.coarse, pair_db.fine, t, n);
  auto norm = [&](Image& im) {
    for (auto& v : im.px) {
      if (!std::isfinite(v)) throw NumericError("normalize: non-finite value in volume");
      v = normalize_value(v, stats);
    }
  };
  for (auto& c : p.coarse) norm(c);
  norm(p.fine);
  return p;
}

// ---------------------------------------------------------------------------
// RSSV1 volume files
//
//   "RSSVOL01" | u32 version, nx, ny, nz | f64 delta, delta_z, min_db, max_db
//   | u32 json length | UTF-8 JSON {config, section, grid} | f32 values
//
// All integers and floats little-endian; values slice-major, x fastest.

inline constexpr char kVolumeMagic[8] = {'R', 'S', 'S', 'V', 'O', 'L', '0', '1'};
inline constexpr std::uint32_t kVolumeVersion = 1;
/// Upper bound on nx*ny*nz accepted by the reader.
inline constexpr std::uint64_t kMaxVolumeValues = std::uint64_t{1} << 34;

inline std::vector<std::uint8_t> encode_volume(const RssVolume& v) {
  if (v.values.size() != static_cast<std::size_t>(v.nz) * v.grid.cells()) {
    throw InvalidArgument("volume value count does not match its dimensions");
  }
  Json meta{{"config", v.config},
            {"section", v.section},
            {"grid", {{"x_origin", v.grid.x_origin}, {"y_origin", v.grid.y_origin}}}};
  const std::string text = meta.dump();
  io::ByteWriter w;
  w.raw(kVolumeMagic, sizeof kVolumeMagic);
  w.u32(kVolumeVersion);
  w.u32(static_cast<std::uint32_t>(v.grid.nx));
  w.u32(static_cast<std::uint32_t>(v.grid.ny));
  w.u32(static_cast<std::uint32_t>(v.nz));
  w.f64(v.grid.delta);
  w.f64(v.config.delta_z);
  w.f64(v.stats.min_db);
  w.f64(v.stats.max_db);
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.text(text);
  w.f32s(v.values);
  return w.release();
}

inline RssVolume decode_volume(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  if (bytes.size() < sizeof kVolumeMagic || r.text(sizeof kVolumeMagic) != std::string_view(kVolumeMagic, 8)) {
    throw FormatError(FormatError::Kind::bad_magic, "bad magic: not an RSSV1 volume");
  }
  const auto version = r.u32();
  if (version != kVolumeVersion) {
    throw FormatError(FormatError::Kind::unsupported_version, "unsupported version " + std::to_string(version));
  }
  const std::uint64_t nx = r.u32(), ny = r.u32(), nz = r.u32();
  std::uint64_t count = 0;
  if (nx == 0 || ny == 0 || nx > kMaxVolumeValues / ny || nx * ny > kMaxVolumeValues / std::max<std::uint64_t>(nz, 1)) {
    throw FormatError(FormatError::Kind::dimension_overflow,
                      "dimension overflow: " + std::to_string(nx) + "x" + std::to_string(ny) + "x" + std::to_string(nz));
  }
  count = nx * ny * nz;
  RssVolume v;
  v.grid.nx = static_cast<int>(nx);
  v.grid.ny = static_cast<int>(ny);
  v.nz = static_cast<int>(nz);
  v.grid.delta = r.f64();
  const double delta_z = r.f64();
  v.stats.min_db = r.f64();
  v.stats.max_db = r.f64();
  const auto json_len = r.u32();
  Json meta;
  try {
    meta = Json::parse(r.text(json_len));
    v.config = meta.at("config").get<PweConfig>();
    v.section = meta.at("section").get<CrossSection>();
    v.grid.x_origin = meta.at("grid").at("x_origin").get<double>();
    v.grid.y_origin = meta.at("grid").at("y_origin").get<double>();
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(FormatError::Kind::malformed, std::string("malformed volume metadata: ") + e.what());
  }
  v.config.delta_z = delta_z;
  if (r.remaining() < count * sizeof(float)) {
    throw FormatError(FormatError::Kind::truncated, "truncated payload: expected " + std::to_string(count) +
                                                        " values, have " + std::to_string(r.remaining() / 4));
  }
  v.values.resize(count);
  r.f32s(v.values);
  return v;
}

inline void save_volume(const RssVolume& v, const std::filesystem::path& path) {
  io::write_file(path, encode_volume(v));
}

inline RssVolume load_volume(const std::filesystem::path& path) { return decode_volume(io::read_file(path)); }

// ---------------------------------------------------------------------------
// Dataset manifest (JSON): pair paths, split tags, per-split NormStats.

struct ManifestEntry {
  std::string coarse;  // paths relative to the manifest directory
  std::string fine;
  Split split = Split::train;
  TunnelCase config;
};

struct Manifest {
  std::vector<ManifestEntry> pairs;
  std::map<std::string, NormStats> stats;  // keyed by split name

  Json to_json() const {
    Json j{{"version", 1}, {"pairs", Json::array()}, {"norm_stats", Json::object()}};
    for (const auto& e : pairs) {
      j["pairs"].push_back(
          {{"coarse", e.coarse}, {"fine", e.fine}, {"split", std::string(to_string(e.split))}, {"case", e.config}});
    }
    for (const auto& [k, s] : stats) j["norm_stats"][k] = s;
    return j;
  }

  static Manifest from_json(const Json& j) {
    Manifest m;
    try {
      for (const auto& e : j.at("pairs")) {
        m.pairs.push_back({e.at("coarse").get<std::string>(), e.at("fine").get<std::string>(),
                           split_from_string(e.at("split").get<std::string>()), e.at("case").get<TunnelCase>()});
      }
      for (const auto& [k, s] : j.at("norm_stats").items()) m.stats[k] = s.get<NormStats>();
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw FormatError(FormatError::Kind::malformed, std::string("malformed manifest: ") + e.what());
    }
    return m;
  }

  void save(const std::filesystem::path& path) const {
    const std::string text = to_json().dump(2) + "\n";
    io::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  }

  static Manifest load(const std::filesystem::path& path) {
    const auto bytes = io::read_file(path);
    try {
      return from_json(Json::parse(bytes.begin(), bytes.end()));
    } catch (const Json::parse_error& e) {
      throw FormatError(FormatError::Kind::malformed, std::string("manifest is not JSON: ") + e.what());
    }
  }
};

}  // namespace tunnelwave
