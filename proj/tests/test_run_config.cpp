// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tunnelwave Authors

#include <catch_amalgamated.hpp>

#include <tunnelwave/run_config.hpp>

using namespace tunnelwave;
using Catch::Matchers::ContainsSubstring;

namespace {

std::string config_error_path(const Json& j) {
  try {
    parse_run_config(j);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "<accepted>";
}

}  // namespace

TEST_CASE("empty document gives the figures preset") {
  const auto c = parse_run_config(Json::object());
  CHECK(c.preset == Preset::figures);
  CHECK(c.grid.size() == figures_grid().size());
  CHECK(c.defaults.length == 1000.0);
  CHECK(c.roi_margin == 2);
  CHECK(c.model == PrbpnConfig{});
}

TEST_CASE("massif preset runs 2500 m") {
  const auto c = parse_run_config(Json{{"preset", "massif"}});
  CHECK(c.defaults.length == 2500.0);
  CHECK(c.grid.frequencies == massif_grid().frequencies);
  CHECK(parse_run_config(Json{{"preset", "tableI"}}, Preset::massif).preset == Preset::massif);
}

TEST_CASE("overrides reach the grid, model and trainer") {
  const Json j = Json::parse(R"({
    "preset": "tableI",
    "grid": {"shapes": ["rectangular"], "frequencies_ghz": [0.9], "sigma": [0.01]},
    "split": "train", "limit": 3, "length": 120, "roi_margin": 1,
    "model": {"base_channels": 8, "dwtf": false, "beta": 0.002},
    "train": {"max_iters": 10, "schedule": "cosine", "lr": 0.001, "crop": [4, 4]},
    "eval": {"slices": 5}
  })");
  const auto c = parse_run_config(j);
  CHECK(c.grid.shapes == std::vector{TunnelShape::rectangular});
  CHECK(c.grid.frequencies == std::vector{0.9e9});
  CHECK(c.model.base_channels == 8);
  CHECK_FALSE(c.model.dwtf);
  CHECK(c.train.max_iters == 10);
  CHECK(c.train.schedule == LrSchedule::cosine);
  CHECK(c.train.crop->w == 4);
  CHECK(c.train.beta == 0.002);  // inherited from the model block
  CHECK(c.eval_slices == 5);
  const auto cases = c.cases();
  REQUIRE(cases.size() == 3);
  for (const auto& tc : cases) {
    CHECK(tc.pwe.length == 120.0);
    CHECK(in_split(tc.pwe.tx, Split::train));
  }
  CHECK(Json(cases) == Json(spread_subset(enumerate_configs(c.grid, Split::train, c.defaults), 3)));
}

TEST_CASE("schema errors carry the JSON path") {
  CHECK(config_error_path(Json{{"bogus", 1}}) == "$.bogus");
  CHECK(config_error_path(Json{{"train", {{"foo", 1}}}}) == "$.train.foo");
  CHECK(config_error_path(Json{{"model", {{"base_channels", "wide"}}}}) == "$.model.base_channels");
  CHECK(config_error_path(Json{{"grid", {{"sigma", Json::array()}}}}) == "$.grid.sigma");
  CHECK(config_error_path(Json{{"train", {{"crop", {4}}}}}) == "$.train.crop");
  CHECK(config_error_path(Json::array()) == "$");
}

TEST_CASE("semantic errors carry the JSON path too") {
  CHECK(config_error_path(Json{{"preset", "everest"}}) == "$.preset");
  CHECK(config_error_path(Json{{"grid", {{"shapes", {"round"}}}}}) == "$.grid.shapes");
  CHECK(config_error_path(Json{{"split", "dev"}}) == "$.split");
  CHECK(config_error_path(Json{{"limit", 0}}) == "$.limit");
  CHECK(config_error_path(Json{{"length", -5}}) == "$.length");
  CHECK(config_error_path(Json{{"model", {{"scale", 3}}}}) == "$.model");
  CHECK(config_error_path(Json{{"train", {{"schedule", "step"}}}}) == "$.train");
  CHECK(config_error_path(Json{{"train", {{"target_r2", 0.9}}}}) == "$.train");
  CHECK(config_error_path(Json{{"eval", {{"slices", 0}}}}) == "$.eval.slices");
  CHECK(config_error_path(Json{{"section", {{"width", 0.5}}}}) == "$.section");
}

TEST_CASE("spread_subset picks evenly spaced items in order") {
  const std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  CHECK(spread_subset(v, 4) == std::vector<int>{0, 2, 5, 7});
  CHECK(spread_subset(v, 20) == v);
  CHECK_THROWS_AS(spread_subset(v, 0), InvalidArgument);
}
