// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tunnelwave Authors
#pragma once

#include <tunnelwave/geometry.hpp>
#include <tunnelwave/pwe.hpp>

#include <json.hpp>

#include <string>

// JSON forms of the simulation types. Doubles are written with round-trip
// precision, so a parse of a dump reproduces every value bit for bit.

namespace tunnelwave {

using Json = nlohmann::json;

inline void to_json(Json& j, const CrossSection& s) {
  j = Json{{"kind", std::string(to_string(s.kind))},
           {"width", s.width},
           {"height", s.height},
           {"arch_spring_height", s.arch_spring_height},
           {"top_width", s.top_width}};
}

inline void from_json(const Json& j, CrossSection& s) {
  s = make_cross_section(shape_from_string(j.at("kind").get<std::string>()), j.at("width").get<double>(),
                         j.at("height").get<double>(),
                         {j.at("arch_spring_height").get<double>(), j.at("top_width").get<double>()});
}

inline void to_json(Json& j, const Material& m) { j = Json{{"eps_r", m.eps_r}, {"sigma", m.sigma}}; }
inline void from_json(const Json& j, Material& m) {
  m.eps_r = j.at("eps_r").get<double>();
  m.sigma = j.at("sigma").get<double>();
}

inline void to_json(Json& j, const Transmitter& t) { j = Json{{"x", t.x}, {"y", t.y}}; }
inline void from_json(const Json& j, Transmitter& t) {
  t.x = j.at("x").get<double>();
  t.y = j.at("y").get<double>();
}

inline void to_json(Json& j, const PweConfig& c) {
  j = Json{{"frequency", c.frequency}, {"delta_z", c.delta_z},   {"length", c.length},
           {"material", c.material},   {"tx", c.tx},             {"beam_std", c.beam_std},
           {"mesh_factor", c.mesh_factor}, {"absorber", c.absorber}};
}

inline void from_json(const Json& j, PweConfig& c) {
  c.frequency = j.at("frequency").get<double>();
  c.delta_z = j.at("delta_z").get<double>();
  c.length = j.at("length").get<double>();
  c.material = j.at("material").get<Material>();
  c.tx = j.at("tx").get<Transmitter>();
  c.beam_std = j.at("beam_std").get<double>();
  c.mesh_factor = j.at("mesh_factor").get<double>();
  c.absorber = j.at("absorber").get<bool>();
}

inline void to_json(Json& j, const NormStats& s) { j = Json{{"min_db", s.min_db}, {"max_db", s.max_db}}; }
inline void from_json(const Json& j, NormStats& s) {
  s.min_db = j.at("min_db").get<double>();
  s.max_db = j.at("max_db").get<double>();
}

}  // namespace tunnelwave
