// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tunnelwave Authors
#pragma once

// PRBW1 checkpoints: network parameters, optimiser moments and the training
// state needed to resume a run bit for bit.
//
//   "PRBW1\0\0\0" | u32 version | u32 json length | UTF-8 JSON
//   | u32 tensor count | tensors
//
// tensor: u32 name length | name | u32 rank | u32 dims[rank] | f32 values
// JSON:   {model, seed, state {iteration, adam_step, adam {lr, beta1, beta2,
//         eps}, rng [4 x u64]}, norm_stats?, train?}
// Tensors are the parameters in network order, then "adam.m.<name>" and
// "adam.v.<name>" for each parameter. Integers and floats are little-endian.

#include <tunnelwave/adam.hpp>
#include <tunnelwave/binary_io.hpp>
#include <tunnelwave/error.hpp>
#include <tunnelwave/prbpn.hpp>
#include <tunnelwave/rng.hpp>
#include <tunnelwave/serialization.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace tunnelwave {

inline constexpr char kCheckpointMagic[8] = {'P', 'R', 'B', 'W', '1', '\0', '\0', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint32_t kMaxTensorRank = 8;

struct TrainState {
  std::uint64_t iteration = 0;
  std::uint64_t adam_step = 0;
  tc::AdamHyper adam;
  Rng::State rng{};

  bool operator==(const TrainState& o) const {
    return iteration == o.iteration && adam_step == o.adam_step && adam.lr == o.adam.lr &&
           adam.beta1 == o.adam.beta1 && adam.beta2 == o.adam.beta2 && adam.eps == o.adam.eps && rng == o.rng;
  }
};

struct NamedTensor {
  std::string name;
  tc::Tensor tensor;
};

struct Checkpoint {
  PrbpnConfig model;
  std::uint64_t seed = 0;
  TrainState state;
  std::optional<NormStats> norm_stats;
  Json train;  // TrainConfig as JSON, null when absent
  std::vector<NamedTensor> tensors;

  const tc::Tensor* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t.tensor;
    return nullptr;
  }
};

inline Json checkpoint_header(const Checkpoint& c) {
  Json j;
  j["model"] = c.model;
  j["seed"] = c.seed;
  j["state"] = {{"iteration", c.state.iteration},
                {"adam_step", c.state.adam_step},
                {"adam",
                 {{"lr", c.state.adam.lr},
                  {"beta1", c.state.adam.beta1},
                  {"beta2", c.state.adam.beta2},
                  {"eps", c.state.adam.eps}}},
                {"rng", c.state.rng}};
  if (c.norm_stats) j["norm_stats"] = *c.norm_stats;
  if (!c.train.is_null()) j["train"] = c.train;
  return j;
}

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  io::ByteWriter w;
  w.raw(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(kCheckpointVersion);
  const std::string header = checkpoint_header(c).dump();
  w.u32(static_cast<std::uint32_t>(header.size()));
  w.text(header);
  w.u32(static_cast<std::uint32_t>(c.tensors.size()));
  std::vector<float> buf;
  for (const auto& [name, t] : c.tensors) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.text(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    buf.assign(t.size(), 0.0f);
    for (std::size_t k = 0; k < t.size(); ++k) buf[k] = static_cast<float>(t[k]);
    w.f32s(buf);
  }
  return w.release();
}

inline Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  using Kind = FormatError::Kind;
  io::ByteReader r(bytes);
  if (bytes.size() < sizeof kCheckpointMagic ||
      r.text(sizeof kCheckpointMagic) != std::string_view(kCheckpointMagic, sizeof kCheckpointMagic)) {
    throw FormatError(Kind::bad_magic, "not a PRBW1 checkpoint (bad magic)");
  }
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError(Kind::unsupported_version, "unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = r.u32();
  const auto header_text = r.text(header_len);
  Checkpoint c;
  try {
    const Json j = Json::parse(header_text);
    c.model = j.at("model").get<PrbpnConfig>();
    c.seed = j.at("seed").get<std::uint64_t>();
    const auto& s = j.at("state");
    c.state.iteration = s.at("iteration").get<std::uint64_t>();
    c.state.adam_step = s.at("adam_step").get<std::uint64_t>();
    const auto& a = s.at("adam");
    c.state.adam = {a.at("lr").get<double>(), a.at("beta1").get<double>(), a.at("beta2").get<double>(),
                    a.at("eps").get<double>()};
    c.state.rng = s.at("rng").get<Rng::State>();
    if (j.contains("norm_stats")) c.norm_stats = j.at("norm_stats").get<NormStats>();
    if (j.contains("train")) c.train = j.at("train");
  } catch (const Json::exception& e) {
    throw FormatError(Kind::malformed, std::string("checkpoint header: ") + e.what());
  }
  const auto count = r.u32();
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedTensor t;
    t.name = r.text(r.u32());
    const auto rank = r.u32();
    if (rank == 0 || rank > kMaxTensorRank) {
      throw FormatError(Kind::dimension_overflow, "tensor '" + t.name + "' has rank " + std::to_string(rank));
    }
    std::vector<int> shape;
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto dim = r.u32();
      if (dim == 0 || dim > (1u << 30) || n > (std::uint64_t{1} << 40) / dim) {
        throw FormatError(Kind::dimension_overflow, "tensor '" + t.name + "' has an implausible shape");
      }
      n *= dim;
      shape.push_back(static_cast<int>(dim));
    }
    if (r.remaining() < n * sizeof(float)) {
      throw FormatError(Kind::truncated, "tensor '" + t.name + "' payload is truncated");
    }
    std::vector<float> buf(n);
    r.f32s(buf);
    t.tensor = tc::Tensor(shape, std::vector<double>(buf.begin(), buf.end()));
    c.tensors.push_back(std::move(t));
  }
  if (r.remaining() != 0) {
    throw FormatError(Kind::malformed, std::to_string(r.remaining()) + " trailing bytes after the last tensor");
  }
  return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  io::write_file(path, encode_checkpoint(c));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

/// Snapshot of a network and (optionally) its optimiser.
inline Checkpoint make_checkpoint(const Prbpn& model, const tc::Adam* adam, std::uint64_t seed, TrainState state = {},
                                  std::optional<NormStats> stats = std::nullopt, Json train = nullptr) {
  Checkpoint c;
  c.model = model.config();
  c.seed = seed;
  c.norm_stats = stats;
  c.train = std::move(train);
  const auto& params = model.parameters();
  for (const auto& [name, p] : params) c.tensors.push_back({name, p.value()});
  if (adam) {
    state.adam = adam->hyper();
    state.adam_step = adam->step_count();
    for (std::size_t i = 0; i < params.size(); ++i)
      c.tensors.push_back({"adam.m." + params[i].first, adam->first_moments()[i]});
    for (std::size_t i = 0; i < params.size(); ++i)
      c.tensors.push_back({"adam.v." + params[i].first, adam->second_moments()[i]});
  }
  c.state = state;
  return c;
}

/// Builds a network from the checkpoint and copies its parameters in. Every
/// parameter must be present with the expected shape.
inline Prbpn restore_model(const Checkpoint& c) {
  Prbpn model(c.model);
  for (auto& [name, p] : model.parameters()) {
    const tc::Tensor* t = c.find(name);
    if (!t) throw FormatError(FormatError::Kind::malformed, "checkpoint lacks parameter '" + name + "'");
    if (t->shape() != p.value().shape()) {
      throw FormatError(FormatError::Kind::malformed, "parameter '" + name + "' has shape " + t->shape_string() +
                                                          ", network expects " + p.value().shape_string());
    }
    const_cast<tc::Var&>(p).mutable_value() = *t;
  }
  return model;
}

/// Copies the optimiser moments and step count into `adam`, whose parameters
/// must be those of a network restored from the same checkpoint.
inline void restore_optimizer(const Checkpoint& c, const Prbpn& model, tc::Adam& adam) {
  const auto& params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const tc::Tensor* m = c.find("adam.m." + params[i].first);
    const tc::Tensor* v = c.find("adam.v." + params[i].first);
    if (!m || !v) throw FormatError(FormatError::Kind::malformed, "checkpoint lacks optimiser state for '" +
                                                                      params[i].first + "'");
    if (m->shape() != params[i].second.value().shape() || v->shape() != m->shape()) {
      throw FormatError(FormatError::Kind::malformed, "optimiser state shape mismatch for '" + params[i].first + "'");
    }
    adam.first_moments()[i] = *m;
    adam.second_moments()[i] = *v;
  }
  adam.set_step_count(c.state.adam_step);
  adam.set_lr(c.state.adam.lr);
}

}  // namespace tunnelwave
