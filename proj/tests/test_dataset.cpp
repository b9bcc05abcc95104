// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tunnelwave Authors

#include <catch_amalgamated.hpp>

#include <tunnelwave/dataset.hpp>

#include <cmath>
#include <filesystem>
#include <set>

using namespace tunnelwave;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

TunnelCase short_case(double f = 0.9e9, double length = 24.0) {
  auto section = make_cross_section(TunnelShape::rectangular, 4.0, 4.0);
  return {section, PweConfig::standard(f, length, {5.0, 0.01}, {0.5, 1.0}, kFineMeshFactor)};
}

RssVolume synthetic_volume(int nx, int ny, int nz, float base = -60.0f) {
  RssVolume v;
  v.grid = GridSpec{nx, ny, 0.5, -0.5 * (nx - 1) * 0.5, 2.0 - 0.5 * (ny - 1) * 0.5};
  v.section = make_cross_section(TunnelShape::rectangular, 4.0, 4.0);
  v.config = PweConfig::standard(0.9e9, 10.0, {5.0, 0.01}, {0.0, 1.0}, kFineMeshFactor);
  v.nz = nz;
  v.values.resize(static_cast<std::size_t>(nx) * ny * nz);
  for (std::size_t c = 0; c < v.values.size(); ++c) v.values[c] = base + static_cast<float>(c % 97) * 0.25f;
  v.stats = {-100.0, 0.0};
  return v;
}

// Coarse volume whose slice t is filled with the value t, and a matching fine one.
std::pair<RssVolume, RssVolume> indexed_pair(int nz, int cw = 3, int ch = 2) {
  auto c = synthetic_volume(cw, ch, nz);
  auto f = synthetic_volume(kMeshRatio * cw, kMeshRatio * ch, nz);
  for (int t = 0; t < nz; ++t) {
    for (auto& x : c.slice(t)) x = static_cast<float>(t);
    auto s = f.slice(t);
    for (std::size_t k = 0; k < s.size(); ++k) s[k] = static_cast<float>(1000 * t + k);
  }
  return {c, f};
}

}  // namespace

TEST_CASE("preset grid sizes and frequency axes") {
  const auto grid = table1_grid();
  CHECK(grid.size() == 11880);
  CHECK(enumerate_configs(grid, Split::all).size() == 11880);
  const std::vector<double> expected{0.9e9, 1.9e9, 2.9e9, 3.9e9, 4.9e9, 5.9e9};
  REQUIRE(grid.frequencies.size() == expected.size());
  for (std::size_t k = 0; k < expected.size(); ++k) CHECK_THAT(grid.frequencies[k], WithinAbs(expected[k], 1e-3));
  CHECK(grid.tx_x.size() == 11);
  CHECK(grid.tx_y.size() == 5);
  CHECK(figures_grid().frequencies == ghz({0.9, 2.4, 4.9, 5.8}));
  CHECK(massif_grid().shapes == std::vector{TunnelShape::arched_vertical_walls});
}

TEST_CASE("split filters are closed intervals and disjoint") {
  CHECK(in_split({1.2, 2.0}, Split::test));
  CHECK_FALSE(in_split({1.2, 2.0}, Split::train));
  CHECK(in_split({1.0, 0.5}, Split::train));
  CHECK_FALSE(in_split({1.0, 1.5}, Split::train));

  const auto grid = table1_grid();
  const auto train = enumerate_configs(grid, Split::train);
  const auto test = enumerate_configs(grid, Split::test);
  std::set<std::pair<double, double>> train_tx, test_tx;
  for (const auto& c : train) train_tx.insert({c.pwe.tx.x, c.pwe.tx.y});
  for (const auto& c : test) test_tx.insert({c.pwe.tx.x, c.pwe.tx.y});
  for (const auto& p : test_tx) CHECK(train_tx.count(p) == 0);
  // 6 x-positions by 2 y-positions for train, 5 by 2 for test
  CHECK(train_tx.size() == 12);
  CHECK(test_tx.size() == 10);
  CHECK(train.size() == 4 * 6 * 9 * 12);
}

TEST_CASE("enumeration is deterministic and lexicographic") {
  const auto a = enumerate_configs(figures_grid(), Split::train);
  const auto b = enumerate_configs(figures_grid(), Split::train);
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    REQUIRE(Json(a[k]) == Json(b[k]));
  }
  // innermost axis is tx_y
  CHECK(a[0].pwe.tx.y == 0.5);
  CHECK(a[1].pwe.tx.y == 1.0);
  CHECK(a[1].pwe.tx.x == a[0].pwe.tx.x);
  CHECK(a.front().section.kind == TunnelShape::rectangular);
  CHECK(a.back().section.kind == TunnelShape::trapezoidal);
}

TEST_CASE("empty filter result names the split") {
  auto grid = table1_grid();
  grid.tx_x = {1.1};
  CHECK_THROWS_WITH(enumerate_configs(grid, Split::train), ContainsSubstring("train"));
  grid.tx_x = {};
  CHECK_THROWS_AS(enumerate_configs(grid, Split::all), InvalidArgument);
}

TEST_CASE("generate_pair returns aligned 8x volumes") {
  const auto pair = generate_pair(short_case());
  CHECK(pair.fine.grid.nx == kMeshRatio * pair.coarse.grid.nx);
  CHECK(pair.fine.grid.ny == kMeshRatio * pair.coarse.grid.ny);
  CHECK(pair.coarse.nz == pair.fine.nz);
  CHECK(pair.coarse.nz == 36);  // 24 m / (2 * 0.3331 m)
  CHECK(pair.coarse.z_of(5) == pair.fine.z_of(5));
  CHECK(pair.coarse.config.mesh_factor == kCoarseMeshFactor);
  CHECK(pair.fine.config.mesh_factor == kFineMeshFactor);
  // the fine window covers exactly the same region as the coarse one
  CHECK_THAT(pair.fine.grid.x_origin - 0.5 * pair.fine.grid.delta,
             WithinAbs(pair.coarse.grid.x_origin - 0.5 * pair.coarse.grid.delta, 1e-9));
  for (float v : pair.fine.values) REQUIRE(std::isfinite(v));
}

TEST_CASE("normalize maps the range onto [0, 1]") {
  auto v = synthetic_volume(4, 4, 2);
  const NormStats s{-60.0, -20.0};
  v.values[0] = -60.0f;
  v.values[1] = -20.0f;
  v.values[2] = -40.0f;
  v.values[3] = -80.0f;
  auto [n, used] = normalize(v, s);
  CHECK(n.values[0] == 0.0f);
  CHECK(n.values[1] == 1.0f);
  CHECK(n.values[2] == 0.5f);
  CHECK(n.values[3] == 0.0f);
  CHECK(used.min_db == s.min_db);
  CHECK(n.stats.max_db == s.max_db);
}

TEST_CASE("normalize without stats uses the interior range") {
  auto v = synthetic_volume(8, 8, 3);
  auto [n, s] = normalize(v);
  const auto r = interior_range(v);
  CHECK(s.min_db == r.min_db);
  CHECK(s.max_db == r.max_db);
  float lo = 1, hi = 0;
  const auto m = v.interior();
  for (int t = 0; t < n.nz; ++t)
    for (std::size_t c = 0; c < m.cells.size(); ++c)
      if (m.cells[c]) {
        lo = std::min(lo, n.slice(t)[c]);
        hi = std::max(hi, n.slice(t)[c]);
      }
  CHECK(lo == 0.0f);
  CHECK(hi == 1.0f);
}

TEST_CASE("denormalize inverts normalize within one float ulp") {
  auto v = synthetic_volume(6, 6, 4);
  const NormStats s{-100.0, 0.0};
  auto [n, used] = normalize(v, s);
  const auto back = denormalize(n, used);
  for (std::size_t c = 0; c < v.values.size(); ++c) {
    const float a = v.values[c], b = back.values[c];
    REQUIRE(std::abs(a - b) <= std::nextafter(std::abs(a), INFINITY) - std::abs(a));
  }
}

TEST_CASE("degenerate stats are rejected") {
  auto v = synthetic_volume(4, 4, 1);
  for (auto& x : v.values) x = -50.0f;
  CHECK_THROWS_AS(normalize(v), NumericError);
  CHECK_THROWS_AS(normalize(v, NormStats{1.0, 1.0}), NumericError);
}

TEST_CASE("window clamps at the sequence ends") {
  auto [c, f] = indexed_pair(10);
  auto mid = window(c, f, 5, 2);
  REQUIRE(mid.coarse.size() == 5);
  CHECK(mid.target().px[0] == 5.0f);
  CHECK(mid.coarse.front().px[0] == 3.0f);
  CHECK(mid.fine.px[0] == 5000.0f);

  auto head = window(c, f, 0, 2);
  CHECK(head.coarse[0].px[0] == 0.0f);
  CHECK(head.coarse[1].px[0] == 0.0f);
  CHECK(head.coarse[2].px[0] == 0.0f);
  CHECK(head.coarse[4].px[0] == 2.0f);

  auto tail = window(c, f, 9, 2);
  CHECK(tail.coarse[4].px[0] == 9.0f);
  CHECK(tail.coarse[3].px[0] == 9.0f);

  auto single = window(c, f, 4, 0);
  CHECK(single.coarse.size() == 1);
  CHECK(single.target().px[0] == 4.0f);

  CHECK_THROWS_AS(window(c, f, 10, 2), InvalidArgument);
}

TEST_CASE("horizontal flip is an involution and mirrors x") {
  auto [c, f] = indexed_pair(4);
  auto p = window(c, f, 1, 1);
  auto once = flip_horizontal(p);
  CHECK(once.fine.at(0, 0) == p.fine.at(p.fine.w - 1, 0));
  CHECK(flip_horizontal(once) == p);
  CHECK(rotate_half_turn(rotate_half_turn(p)) == p);
  CHECK(once.fine.w == p.fine.w);
  CHECK(once.fine.h == p.fine.h);
}

TEST_CASE("augment keeps the 8x correspondence and is deterministic") {
  auto [c, f] = indexed_pair(6, 5, 4);
  auto p = window(c, f, 2, 2);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng a(seed), b(seed);
    auto x = augment(p, a, CropSize{3, 2});
    auto y = augment(p, b, CropSize{3, 2});
    REQUIRE(x == y);
    REQUIRE(x.coarse.size() == 5);
    REQUIRE(x.coarse[0].w == 3);
    REQUIRE(x.coarse[0].h == 2);
    REQUIRE(x.fine.w == 8 * 3);
    REQUIRE(x.fine.h == 8 * 2);
  }
  Rng rng(3);
  auto full = augment(p, rng);
  CHECK(full.fine.w == p.fine.w);
  CHECK(full.fine.h == p.fine.h);
  CHECK_THROWS_AS(augment(p, rng, CropSize{6, 1}), InvalidArgument);
  CHECK_THROWS_AS(augment(p, rng, CropSize{1, 5}), InvalidArgument);
}

TEST_CASE("augmented crops line up with the source") {
  // A coarse value encodes its (i, j); the fine value encodes (i / 8, j / 8).
  SamplePair p;
  Image coarse{6, 5, std::vector<float>(30)};
  for (int j = 0; j < 5; ++j)
    for (int i = 0; i < 6; ++i) coarse.at(i, j) = static_cast<float>(100 * i + j);
  Image fine{48, 40, std::vector<float>(48 * 40)};
  for (int j = 0; j < 40; ++j)
    for (int i = 0; i < 48; ++i) fine.at(i, j) = static_cast<float>(100 * (i / 8) + j / 8);
  p.coarse = {coarse};
  p.fine = fine;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    auto a = augment(p, rng, CropSize{2, 3});
    for (int j = 0; j < a.fine.h; ++j)
      for (int i = 0; i < a.fine.w; ++i) REQUIRE(a.fine.at(i, j) == a.coarse[0].at(i / 8, j / 8));
  }
}

TEST_CASE("RSSV1 round trip is bit exact") {
  auto v = synthetic_volume(7, 5, 3);
  v.stats = {-123.456789, -1.5};
  const auto bytes = encode_volume(v);
  const auto back = decode_volume(bytes);
  CHECK(io::fnv1a(encode_volume(back)) == io::fnv1a(bytes));
  CHECK(back.values == v.values);
  CHECK(back.stats.min_db == v.stats.min_db);
  CHECK(back.grid.x_origin == v.grid.x_origin);
  CHECK(back.grid.delta == v.grid.delta);
  CHECK(back.config.frequency == v.config.frequency);
  CHECK(back.config.delta_z == v.config.delta_z);
  CHECK(back.section.kind == v.section.kind);

  const auto path = std::filesystem::temp_directory_path() / "tunnelwave_test_volume.rssv";
  save_volume(v, path);
  CHECK(load_volume(path).values == v.values);
  std::filesystem::remove(path);
}

TEST_CASE("RSSV1 reader reports each corruption distinctly") {
  const auto good = encode_volume(synthetic_volume(4, 3, 2));
  auto kind_of = [](std::vector<std::uint8_t> bytes) {
    try {
      decode_volume(bytes);
    } catch (const FormatError& e) {
      return e.kind();
    }
    FAIL("decode did not throw");
    return FormatError::Kind::io;
  };

  auto bad_magic = good;
  bad_magic[0] = 'X';
  CHECK(kind_of(bad_magic) == FormatError::Kind::bad_magic);
  CHECK_THROWS_WITH(decode_volume(bad_magic), ContainsSubstring("bad magic"));

  auto bad_version = good;
  bad_version[8] += 1;
  CHECK(kind_of(bad_version) == FormatError::Kind::unsupported_version);
  CHECK_THROWS_WITH(decode_volume(bad_version), ContainsSubstring("unsupported version"));

  auto truncated = good;
  truncated.resize(truncated.size() - 3);
  CHECK(kind_of(truncated) == FormatError::Kind::truncated);

  auto overflow = good;
  for (int b = 12; b < 24; ++b) overflow[b] = 0xff;
  CHECK(kind_of(overflow) == FormatError::Kind::dimension_overflow);

  CHECK(kind_of({}) == FormatError::Kind::bad_magic);
}

TEST_CASE("manifest round trips through JSON") {
  Manifest m;
  m.pairs.push_back({"pairs/0000.coarse.rssv", "pairs/0000.fine.rssv", Split::train, short_case()});
  m.pairs.push_back({"pairs/0001.coarse.rssv", "pairs/0001.fine.rssv", Split::test, short_case(2.4e9)});
  m.stats["train"] = {-90.5, -10.25};
  const auto path = std::filesystem::temp_directory_path() / "tunnelwave_test_manifest.json";
  m.save(path);
  const auto back = Manifest::load(path);
  std::filesystem::remove(path);
  REQUIRE(back.pairs.size() == 2);
  CHECK(back.pairs[1].split == Split::test);
  CHECK(back.pairs[1].config.pwe.frequency == 2.4e9);
  CHECK(back.stats.at("train").max_db == -10.25);
  CHECK(back.to_json() == m.to_json());
}

TEST_CASE("pooled stats span both resolutions") {
  VolumePair p{synthetic_volume(8, 8, 2, -70.0f), synthetic_volume(8, 8, 2, -50.0f)};
  const auto s = pooled_stats({p});
  CHECK(s.min_db == -70.0);
  CHECK(s.max_db == interior_range(p.fine).max_db);
}

TEST_CASE("parallel_for visits every index once and rethrows") {
  std::vector<int> hits(100, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) REQUIRE(h == 1);
  CHECK_THROWS_AS(parallel_for(10, 3,
                               [](std::size_t i) {
                                 if (i == 7) throw NumericError("boom");
                               }),
                  NumericError);
}
