// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tunnelwave Authors
#pragma once

// Batching, slice prediction and evaluation of a trained network on dB volumes.

#include <tunnelwave/dataset.hpp>
#include <tunnelwave/metrics.hpp>
#include <tunnelwave/prbpn.hpp>

#include <algorithm>
#include <span>
#include <vector>

namespace tunnelwave {

/// Stacks equally sized images into a (B, 1, h, w) tensor.
inline tc::Tensor stack_images(std::span<const Image* const> images) {
  if (images.empty()) throw InvalidArgument("stack_images: empty batch");
  const int w = images.front()->w, h = images.front()->h;
  tc::Tensor t({static_cast<int>(images.size()), 1, h, w});
  std::size_t k = 0;
  for (const Image* im : images) {
    if (im->w != w || im->h != h) throw InvalidArgument("stack_images: mixed slice sizes in one batch");
    for (float v : im->px) t[k++] = v;
  }
  return t;
}

/// Network input for a batch: one (B, 1, h, w) Var per window position.
inline std::vector<tc::Var> batch_window(const std::vector<SamplePair>& batch) {
  if (batch.empty()) throw InvalidArgument("batch_window: empty batch");
  const std::size_t len = batch.front().coarse.size();
  std::vector<tc::Var> out;
  std::vector<const Image*> column(batch.size());
  for (std::size_t k = 0; k < len; ++k) {
    for (std::size_t b = 0; b < batch.size(); ++b) {
      if (batch[b].coarse.size() != len) throw InvalidArgument("batch_window: mixed window lengths");
      column[b] = &batch[b].coarse[k];
    }
    out.emplace_back(stack_images(column));
  }
  return out;
}

inline tc::Tensor batch_target(const std::vector<SamplePair>& batch) {
  std::vector<const Image*> column;
  for (const auto& p : batch) column.push_back(&p.fine);
  return stack_images(column);
}

/// Grid of the fine cells that tile `coarse` 8x8 per coarse cell.
inline GridSpec refine_grid(const GridSpec& coarse) {
  const double d = coarse.delta / kMeshRatio;
  const double shift = -0.5 * coarse.delta + 0.5 * d;
  return GridSpec{kMeshRatio * coarse.nx, kMeshRatio * coarse.ny, d, coarse.x_origin + shift, coarse.y_origin + shift};
}

/// Super-resolved slices in [0, 1] for the targets `ts` of a normalised coarse
/// volume. Runs without a tape, `batch` targets per forward pass.
inline std::vector<Image> predict_slices01(const Prbpn& model, const RssVolume& coarse01, std::span<const int> ts,
                                           int batch = 8) {
  tc::NoGradGuard no_grad;
  const int n = model.config().context_radius;
  std::vector<Image> out;
  out.reserve(ts.size());
  for (std::size_t start = 0; start < ts.size(); start += static_cast<std::size_t>(batch)) {
    const std::size_t stop = std::min(ts.size(), start + static_cast<std::size_t>(batch));
    std::vector<SamplePair> chunk;
    for (std::size_t k = start; k < stop; ++k) chunk.push_back({coarse_window(coarse01, ts[k], n), {}, ts[k]});
    const auto sr = model.forward(batch_window(chunk)).value();
    const int h = sr.height(), w = sr.width();
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      Image im{w, h, std::vector<float>(static_cast<std::size_t>(w) * h)};
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          im.at(x, y) = static_cast<float>(std::clamp(sr.at(static_cast<int>(b), 0, y, x), 0.0, 1.0));
      out.push_back(std::move(im));
    }
  }
  return out;
}

/// Fine-grid dB prediction for slices `ts` of a dB coarse volume. Slice k of
/// the result belongs to ts[k]; `nz` is ts.size().
inline RssVolume predict_volume(const Prbpn& model, const RssVolume& coarse_db, const NormStats& stats,
                                std::span<const int> ts) {
  const auto coarse01 = normalize(coarse_db, stats).first;
  const auto slices = predict_slices01(model, coarse01, ts);
  RssVolume v;
  v.grid = refine_grid(coarse_db.grid);
  v.config = coarse_db.config;
  v.config.mesh_factor = kFineMeshFactor;
  v.section = coarse_db.section;
  v.stats = stats;
  v.nz = static_cast<int>(ts.size());
  v.values.reserve(v.grid.cells() * ts.size());
  for (const auto& s : slices)
    for (float p : s.px) v.values.push_back(static_cast<float>(denormalize_value(p, stats)));
  return v;
}

/// `count` slice indices spread evenly over [0, nz): the centres of equal bins.
inline std::vector<int> evaluation_slices(int nz, int count) {
  if (nz < 1 || count < 1) throw InvalidArgument("evaluation_slices: need nz >= 1 and count >= 1");
  count = std::min(count, nz);
  std::vector<int> ts;
  for (int k = 0; k < count; ++k) ts.push_back(static_cast<int>((2 * static_cast<long>(k) + 1) * nz / (2L * count)));
  return ts;
}

/// Metrics of one pair over interior fine cells of the evaluation slices, in dB.
inline MetricsRecord evaluate_pair(const Prbpn& model, const VolumePair& pair_db, const NormStats& stats,
                                   int slices = 80) {
  const auto ts = evaluation_slices(pair_db.fine.nz, slices);
  const auto pred = predict_volume(model, pair_db.coarse, stats, ts);
  const Mask mask = pair_db.fine.interior();
  if (pred.grid.nx != mask.nx || pred.grid.ny != mask.ny) {
    throw InvalidArgument("evaluate: prediction grid does not match the fine volume");
  }
  std::vector<double> y, yh;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const auto ref = pair_db.fine.slice(ts[k]);
    const auto got = pred.slice(static_cast<int>(k));
    for (std::size_t c = 0; c < ref.size(); ++c) {
      if (!mask.cells[c]) continue;
      y.push_back(ref[c]);
      yh.push_back(got[c]);
    }
  }
  return compute_metrics(y, yh);
}

inline GroupKey group_of(const RssVolume& v) { return {v.section.kind, v.config.frequency}; }

/// Per-pair metrics averaged within (shape, frequency) groups.
inline MetricsTable evaluate(const Prbpn& model, const std::vector<VolumePair>& pairs, const NormStats& stats,
                             int slices = 80) {
  if (pairs.empty()) throw InvalidArgument("evaluate: no pairs");
  std::vector<std::pair<GroupKey, MetricsRecord>> per_pair;
  for (const auto& p : pairs) per_pair.push_back({group_of(p.fine), evaluate_pair(model, p, stats, slices)});
  return group_metrics(per_pair);
}

/// Pooled record over every group (mean of the group means).
inline MetricsRecord overall(const MetricsTable& table) {
  std::vector<MetricsRecord> rows;
  for (const auto& [key, rec] : table.rows) rows.push_back(rec);
  return average(rows);
}

}  // namespace tunnelwave
