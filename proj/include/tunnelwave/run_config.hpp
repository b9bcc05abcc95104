// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tunnelwave Authors
#pragma once

// Run configuration documents for the command-line tool. Documents are checked
// against a fixed schema before anything runs; errors name the JSON path.

#include <tunnelwave/dataset.hpp>
#include <tunnelwave/prbpn.hpp>
#include <tunnelwave/train.hpp>

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace tunnelwave {

class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& what) : Error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

namespace schema {

enum class Kind { object, number, integer, boolean, string, number_list, string_list, integer_pair, nullable_number };

struct Node {
  Kind kind = Kind::object;
  std::vector<std::pair<std::string, Node>> fields;  // objects only
};

inline Node leaf(Kind k) { return Node{k, {}}; }
inline Node object(std::vector<std::pair<std::string, Node>> fields) { return Node{Kind::object, std::move(fields)}; }

inline const char* describe(Kind k) {
  switch (k) {
    case Kind::object: return "an object";
    case Kind::number: return "a number";
    case Kind::integer: return "an integer";
    case Kind::boolean: return "a boolean";
    case Kind::string: return "a string";
    case Kind::number_list: return "an array of numbers";
    case Kind::string_list: return "an array of strings";
    case Kind::integer_pair: return "an array of two integers";
    case Kind::nullable_number: return "a number or null";
  }
  return "?";
}

inline bool matches(const Json& j, Kind k) {
  auto all = [&](auto pred) {
    if (!j.is_array() || j.empty()) return false;
    for (const auto& e : j)
      if (!pred(e)) return false;
    return true;
  };
  switch (k) {
    case Kind::object: return j.is_object();
    case Kind::number: return j.is_number();
    case Kind::integer: return j.is_number_integer();
    case Kind::boolean: return j.is_boolean();
    case Kind::string: return j.is_string();
    case Kind::number_list: return all([](const Json& e) { return e.is_number(); });
    case Kind::string_list: return all([](const Json& e) { return e.is_string(); });
    case Kind::integer_pair: return j.is_array() && j.size() == 2 && j[0].is_number_integer() && j[1].is_number_integer();
    case Kind::nullable_number: return j.is_null() || j.is_number();
  }
  return false;
}

inline void validate(const Json& j, const Node& node, const std::string& path) {
  if (!matches(j, node.kind)) throw ConfigError(path, std::string("expected ") + describe(node.kind));
  if (node.kind != Kind::object) return;
  for (const auto& [key, value] : j.items()) {
    const Node* child = nullptr;
    for (const auto& [name, n] : node.fields)
      if (name == key) child = &n;
    if (!child) throw ConfigError(path + "." + key, "unknown key");
    validate(value, *child, path + "." + key);
  }
}

inline const Node& run_config() {
  using K = Kind;
  static const Node root = object({
      {"preset", leaf(K::string)},
      {"grid", object({{"shapes", leaf(K::string_list)},
                       {"frequencies_ghz", leaf(K::number_list)},
                       {"eps_r", leaf(K::number_list)},
                       {"sigma", leaf(K::number_list)},
                       {"tx_x", leaf(K::number_list)},
                       {"tx_y", leaf(K::number_list)}})},
      {"split", leaf(K::string)},
      {"limit", leaf(K::integer)},
      {"section", object({{"width", leaf(K::number)},
                          {"height", leaf(K::number)},
                          {"arch_spring_height", leaf(K::number)},
                          {"top_width", leaf(K::number)}})},
      {"length", leaf(K::number)},
      {"absorber", leaf(K::boolean)},
      {"roi_margin", leaf(K::integer)},
      {"model", object({{"scale", leaf(K::integer)},
                        {"base_channels", leaf(K::integer)},
                        {"resblocks", leaf(K::integer)},
                        {"refine_iters", leaf(K::integer)},
                        {"context_radius", leaf(K::integer)},
                        {"beta", leaf(K::number)},
                        {"dwtf", leaf(K::boolean)}})},
      {"train", object({{"max_iters", leaf(K::integer)},
                        {"batch_size", leaf(K::integer)},
                        {"seed", leaf(K::integer)},
                        {"checkpoint_every", leaf(K::integer)},
                        {"lr", leaf(K::number)},
                        {"schedule", leaf(K::string)},
                        {"lr_min", leaf(K::number)},
                        {"beta", leaf(K::number)},
                        {"eval_every", leaf(K::integer)},
                        {"eval_slices", leaf(K::integer)},
                        {"augment", leaf(K::boolean)},
                        {"crop", leaf(K::integer_pair)},
                        {"target_r2", leaf(K::nullable_number)},
                        {"checkpoint_dir", leaf(K::string)}})},
      {"eval", object({{"slices", leaf(K::integer)}})},
  });
  return root;
}

}  // namespace schema

enum class Preset { table1, figures, massif };

inline Preset preset_from_string(const std::string& s) {
  if (s == "tableI") return Preset::table1;
  if (s == "figures") return Preset::figures;
  if (s == "massif") return Preset::massif;
  throw InvalidArgument("unknown preset '" + s + "' (expected tableI, figures or massif)");
}

inline std::string to_string(Preset p) {
  switch (p) {
    case Preset::table1: return "tableI";
    case Preset::figures: return "figures";
    case Preset::massif: return "massif";
  }
  return "?";
}

struct RunConfig {
  Preset preset = Preset::figures;
  ParamGrid grid = figures_grid();
  Split split = Split::all;
  std::optional<std::size_t> limit;  // evenly spaced subset of the enumeration
  CaseDefaults defaults;
  int roi_margin = 2;
  PrbpnConfig model;
  TrainConfig train;
  int eval_slices = 80;

  std::vector<TunnelCase> cases() const {
    auto all = enumerate_configs(grid, split, defaults);
    return limit ? spread_subset(all, *limit) : all;
  }

  PairOptions pair_options() const { return {roi_margin}; }
};

inline ParamGrid preset_grid(Preset p) {
  switch (p) {
    case Preset::table1: return table1_grid();
    case Preset::figures: return figures_grid();
    case Preset::massif: return massif_grid();
  }
  return {};
}

inline CaseDefaults preset_defaults(Preset p) {
  CaseDefaults d;
  if (p == Preset::massif) d.length = kMassifLength;
  return d;
}

/// Validates `j` and builds a RunConfig on the defaults of its preset (or of
/// `preset_override`, from the command line). Errors carry the JSON path of the offending key.
inline RunConfig parse_run_config(const Json& j, std::optional<Preset> preset_override = std::nullopt) {
  schema::validate(j, schema::run_config(), "$");
  RunConfig c;
  auto at = [](const std::string& path, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(path, e.what());
    } catch (const Json::exception& e) {
      throw ConfigError(path, e.what());
    }
  };
  at("$.preset", [&] {
    c.preset = preset_override ? *preset_override : preset_from_string(j.value("preset", std::string("figures")));
  });
  c.grid = preset_grid(c.preset);
  c.defaults = preset_defaults(c.preset);
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    at("$.grid.shapes", [&] {
      if (!g.contains("shapes")) return;
      c.grid.shapes.clear();
      for (const auto& s : g.at("shapes")) c.grid.shapes.push_back(shape_from_string(s.get<std::string>()));
    });
    if (g.contains("frequencies_ghz")) c.grid.frequencies = ghz(g.at("frequencies_ghz").get<std::vector<double>>());
    if (g.contains("eps_r")) c.grid.eps_r = g.at("eps_r").get<std::vector<double>>();
    if (g.contains("sigma")) c.grid.sigma = g.at("sigma").get<std::vector<double>>();
    if (g.contains("tx_x")) c.grid.tx_x = g.at("tx_x").get<std::vector<double>>();
    if (g.contains("tx_y")) c.grid.tx_y = g.at("tx_y").get<std::vector<double>>();
  }
  at("$.split", [&] {
    if (j.contains("split")) c.split = split_from_string(j.at("split").get<std::string>());
  });
  if (j.contains("limit")) {
    const auto v = j.at("limit").get<long long>();
    if (v < 1) throw ConfigError("$.limit", "must be >= 1");
    c.limit = static_cast<std::size_t>(v);
  }
  if (j.contains("section")) {
    const auto& s = j.at("section");
    c.defaults.width = s.value("width", c.defaults.width);
    c.defaults.height = s.value("height", c.defaults.height);
    c.defaults.extras.arch_spring_height = s.value("arch_spring_height", c.defaults.extras.arch_spring_height);
    c.defaults.extras.top_width = s.value("top_width", c.defaults.extras.top_width);
  }
  c.defaults.length = j.value("length", c.defaults.length);
  if (!(c.defaults.length > 0.0)) throw ConfigError("$.length", "must be positive");
  c.defaults.absorber = j.value("absorber", c.defaults.absorber);
  c.roi_margin = j.value("roi_margin", c.roi_margin);
  if (j.contains("model")) {
    Json m = c.model;
    m.update(j.at("model"));
    c.model = m.get<PrbpnConfig>();
  }
  at("$.model", [&] { c.model.validate(); });
  if (j.contains("train")) at("$.train", [&] { c.train = j.at("train").get<TrainConfig>(); });
  // the smoothness weight lives in the model block; train.beta overrides it
  if (!j.contains("train") || !j.at("train").contains("beta")) c.train.beta = c.model.beta;
  at("$.train", [&] { c.train.validate(); });
  if (j.contains("eval")) c.eval_slices = j.at("eval").value("slices", c.eval_slices);
  if (c.eval_slices < 1) throw ConfigError("$.eval.slices", "must be >= 1");
  // geometry problems surface here rather than halfway through a dataset build
  at("$.section", [&] {
    for (auto shape : c.grid.shapes) make_cross_section(shape, c.defaults.width, c.defaults.height, c.defaults.extras);
  });
  at("$.grid", [&] {
    if (c.grid.size() == 0) throw InvalidArgument("every grid axis needs at least one value");
  });
  return c;
}

}  // namespace tunnelwave
