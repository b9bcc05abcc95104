// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tunnelwave Authors
#pragma once

#include <tunnelwave/autograd.hpp>
#include <tunnelwave/error.hpp>
#include <tunnelwave/rng.hpp>
#include <tunnelwave/serialization.hpp>
#include <tunnelwave/tensor.hpp>

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace tunnelwave {

struct PrbpnConfig {
  int scale = 8;
  int base_channels = 32;
  int resblocks = 3;       // per projection network
  int refine_iters = 3;    // N
  int context_radius = 2;  // n: the window holds 2n+1 coarse slices
  double beta = 1e-4;      // smoothness weight
  bool dwtf = true;

  int window_length() const { return 2 * context_radius + 1; }

  /// Kernel/stride/padding of the up- and down-projections.
  int projection_kernel() const { return scale == 8 ? 12 : (scale == 4 ? 8 : 6); }
  tc::ConvGeometry projection() const { return {scale, 2}; }

  void validate() const {
    if (scale != 2 && scale != 4 && scale != 8) throw InvalidArgument("prbpn: scale must be 2, 4 or 8");
    if (base_channels < 1) throw InvalidArgument("prbpn: base_channels must be >= 1");
    if (resblocks < 0 || refine_iters < 0 || context_radius < 0) {
      throw InvalidArgument("prbpn: resblocks, refine_iters and context_radius must be >= 0");
    }
    if (beta < 0.0 || !std::isfinite(beta)) throw InvalidArgument("prbpn: beta must be a finite value >= 0");
    if (dwtf && context_radius == 0) throw InvalidArgument("prbpn: difference-weighted fusion needs neighbours (n >= 1)");
  }

  bool operator==(const PrbpnConfig&) const = default;
};

inline void to_json(Json& j, const PrbpnConfig& c) {
  j = Json{{"scale", c.scale},
           {"base_channels", c.base_channels},
           {"resblocks", c.resblocks},
           {"refine_iters", c.refine_iters},
           {"context_radius", c.context_radius},
           {"beta", c.beta},
           {"dwtf", c.dwtf}};
}

inline void from_json(const Json& j, PrbpnConfig& c) {
  c.scale = j.at("scale").get<int>();
  c.base_channels = j.at("base_channels").get<int>();
  c.resblocks = j.at("resblocks").get<int>();
  c.refine_iters = j.at("refine_iters").get<int>();
  c.context_radius = j.at("context_radius").get<int>();
  c.beta = j.at("beta").get<double>();
  c.dwtf = j.at("dwtf").get<bool>();
}

/// Recurrent projection/back-projection network mapping 2n+1 coarse slices
/// (B, 1, h, w) to one fine slice (B, 1, 8h, 8w).
class Prbpn {
 public:
  using Var = tc::Var;
  using Tensor = tc::Tensor;

  struct ConvLayer {
    Var weight;
    Var bias;
    tc::ConvGeometry geometry;
    bool transpose = false;

    Var operator()(const Var& x) const {
      return transpose ? tc::conv_transpose2d(x, weight, bias, geometry) : tc::conv2d(x, weight, bias, geometry);
    }
  };

  struct ResBlock {
    ConvLayer conv1;
    Var slope;
    ConvLayer conv2;

    Var operator()(const Var& x) const { return tc::add(x, conv2(tc::prelu(conv1(x), slope))); }
  };

  /// Intermediate values exposed for tests and diagnostics.
  struct Trace {
    std::vector<Var> wdiff;          // per neighbour, empty when fusion is disabled
    std::vector<Var> hr_states;      // target first, then neighbours in processing order
    std::vector<int> neighbour_order;  // window indices
  };

  explicit Prbpn(PrbpnConfig config) : config_(config) {
    config_.validate();
    build();
  }

  // Parameters are shared graph leaves, so copies would alias; use clone().
  Prbpn(const Prbpn&) = delete;
  Prbpn& operator=(const Prbpn&) = delete;
  Prbpn(Prbpn&&) = default;
  Prbpn& operator=(Prbpn&&) = default;

  Prbpn clone() const {
    Prbpn m(config_);
    for (std::size_t k = 0; k < params_.size(); ++k) m.params_[k].second.mutable_value() = params_[k].second.value();
    return m;
  }

  const PrbpnConfig& config() const { return config_; }

  /// Named parameters in their fixed order (initialisation and checkpoint order).
  const std::vector<std::pair<std::string, Var>>& parameters() const { return params_; }

  std::vector<Var> parameter_vars() const {
    std::vector<Var> v;
    for (const auto& [name, p] : params_) v.push_back(p);
    return v;
  }

  Var& parameter(const std::string& name) {
    for (auto& [n, p] : params_)
      if (n == name) return p;
    throw InvalidArgument("prbpn: no parameter named '" + name + "'");
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, p] : params_) n += p.value().size();
    return n;
  }

  /// Weights ~ U(-b, b) with b = sqrt(1 / (dim1 * kh * kw)), biases 0,
  /// PReLU slopes 0.25. Draws come from stream 0 of `seed` in parameter
  /// order and are rounded to float32.
  void initialize(std::uint64_t seed) {
    Rng rng(seed, 0);
    for (auto& [name, p] : params_) {
      auto& t = p.mutable_value();
      if (ends_with(name, ".weight")) {
        const double bound = std::sqrt(1.0 / (static_cast<double>(t.dim(1)) * t.dim(2) * t.dim(3)));
        for (auto& v : t.values()) v = static_cast<float>(rng.uniform(-bound, bound));
      } else if (ends_with(name, ".prelu")) {
        t.fill(0.25);
      } else {
        t.fill(0.0);
      }
    }
  }

  void zero_grad() {
    for (auto& [name, p] : params_) p.zero_grad();
  }

  // --- components ---------------------------------------------------------

  Var extract_target(const Var& slice) const { return tc::prelu(feat0_(slice), feat0_slope_); }

  /// Returns M = ConvBlock([I_t, I_k, |I_t - I_k|]) and the difference map.
  std::pair<Var, Var> neighbor_features(const Var& target, const Var& neighbour) const {
    require_same_slices(target, neighbour);
    Var diff = tc::abs(tc::sub(target, neighbour));
    Var m = tc::prelu(featM_(tc::concat_channels({target, neighbour, diff})), featM_slope_);
    return {m, diff};
  }

  /// wdiff = sigmoid(conv3x3(mean_c(diff))) * mean_c(diff).
  Var weighted_difference(const Var& diff) const {
    if (!config_.dwtf) throw InvalidArgument("prbpn: weighted_difference requires dwtf enabled");
    Var heat = tc::mean_channels(diff);
    return tc::mul(tc::sigmoid(attn_(heat)), heat);
  }

  Var up_project(const Var& lr, const Var& context) const {
    Var x = tc::prelu(up_conv_(tc::concat_channels({lr, context})), up_conv_slope_);
    for (const auto& rb : up_blocks_) x = rb(x);
    return tc::prelu(up_deconv_(x), up_deconv_slope_);
  }

  Var back_project(const Var& hr) const {
    Var x = tc::prelu(down_conv_(hr), down_conv_slope_);
    for (const auto& rb : down_blocks_) x = rb(x);
    return x;
  }

  /// LR residual -> HR correction.
  Var residual(const Var& e) const {
    Var x = e;
    for (const auto& rb : res_blocks_) x = rb(x);
    return res_deconv_(x);
  }

  /// N rounds of e = L_ref - back_project(H); H += residual(e).
  Var refine(Var hr, const Var& lr_ref, int iterations) const {
    if (iterations < 0) throw InvalidArgument("prbpn: refine iterations must be >= 0");
    for (int k = 0; k < iterations; ++k) hr = tc::add(hr, residual(tc::sub(lr_ref, back_project(hr))));
    return hr;
  }

  Var reconstruct(const std::vector<Var>& hr_states) const { return recon_(tc::concat_channels(hr_states)); }

  /// Neighbour processing order: t-1 ... t-n, then t+1 ... t+n (window indices).
  std::vector<int> neighbour_order() const {
    std::vector<int> order;
    const int n = config_.context_radius;
    for (int k = 1; k <= n; ++k) order.push_back(n - k);
    for (int k = 1; k <= n; ++k) order.push_back(n + k);
    return order;
  }

  Var forward(const std::vector<Var>& window, Trace* trace = nullptr) const {
    if (static_cast<int>(window.size()) != config_.window_length()) {
      throw InvalidArgument("prbpn: window has " + std::to_string(window.size()) + " slices, expected " +
                            std::to_string(config_.window_length()));
    }
    const int n = config_.context_radius;
    const Var& target = window[n];
    tc::require_rank4(target.value(), "prbpn input");
    if (target.value().channels() != 1) throw InvalidArgument("prbpn: slices must be single-channel");
    for (const auto& s : window) require_same_slices(target, s);

    const Var l_target = extract_target(target);
    const auto order = neighbour_order();
    std::vector<Var> context;
    for (int idx : order) {
      auto [m, diff] = neighbor_features(target, window[idx]);
      if (config_.dwtf) {
        Var wdiff = weighted_difference(diff);
        if (trace) trace->wdiff.push_back(wdiff);
        m = tc::mul_channels(m, tc::add_scalar(wdiff, 1.0));
      }
      context.push_back(m);
    }
    Var fused = context.empty() ? Var(Tensor::zeros_like(l_target.value())) : context.front();
    for (std::size_t k = 1; k < context.size(); ++k) fused = tc::add(fused, context[k]);

    std::vector<Var> hr_states;
    hr_states.push_back(refine(up_project(l_target, fused), l_target, config_.refine_iters));
    Var state = l_target;
    for (std::size_t k = 0; k < order.size(); ++k) {
      Var h = refine(up_project(state, context[k]), state, config_.refine_iters);
      hr_states.push_back(h);
      state = back_project(h);
    }
    if (trace) {
      trace->hr_states = hr_states;
      trace->neighbour_order = order;
    }
    return reconstruct(hr_states);
  }

  /// mean |SR - HR| + beta * TV(SR).
  static Var loss(const Var& sr, const Tensor& hr, double beta) {
    tc::require_same_shape(sr.value(), hr, "prbpn loss");
    Var rec = tc::l1_loss(sr, hr);
    if (beta == 0.0) return rec;
    return tc::add(rec, tc::scale(tc::tv_loss(sr), beta));
  }

 private:
  static bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  }

  static void require_same_slices(const Var& a, const Var& b) {
    if (a.value().shape() != b.value().shape()) {
      throw InvalidArgument("prbpn: slice shapes differ: " + a.value().shape_string() + " vs " +
                            b.value().shape_string());
    }
  }

  Var add_param(const std::string& name, std::vector<int> shape) {
    Var v(Tensor(std::move(shape)), true);
    params_.emplace_back(name, v);
    return v;
  }

  ConvLayer conv(const std::string& name, int in_c, int out_c, int k, tc::ConvGeometry g, bool transpose = false,
                 bool bias = true) {
    ConvLayer layer;
    layer.weight = add_param(name + ".weight", transpose ? std::vector<int>{in_c, out_c, k, k}
                                                         : std::vector<int>{out_c, in_c, k, k});
    if (bias) layer.bias = add_param(name + ".bias", {out_c});
    layer.geometry = g;
    layer.transpose = transpose;
    return layer;
  }

  Var slope(const std::string& name) { return add_param(name + ".prelu", {1}); }

  std::vector<ResBlock> blocks(const std::string& prefix) {
    std::vector<ResBlock> v;
    const int c = config_.base_channels;
    for (int r = 0; r < config_.resblocks; ++r) {
      const std::string p = prefix + ".res" + std::to_string(r);
      ResBlock rb;
      rb.conv1 = conv(p + ".conv1", c, c, 3, {1, 1});
      rb.slope = slope(p);
      rb.conv2 = conv(p + ".conv2", c, c, 3, {1, 1});
      v.push_back(rb);
    }
    return v;
  }

  void build() {
    const int c = config_.base_channels;
    const int k = config_.projection_kernel();
    const auto g = config_.projection();
    feat0_ = conv("feat0", 1, c, 3, {1, 1});
    feat0_slope_ = slope("feat0");
    featM_ = conv("featM", 3, c, 3, {1, 1});
    featM_slope_ = slope("featM");
    if (config_.dwtf) attn_ = conv("attn", 1, 1, 3, {1, 1});
    up_conv_ = conv("up.conv", 2 * c, c, 3, {1, 1});
    up_conv_slope_ = slope("up.conv");
    up_blocks_ = blocks("up");
    up_deconv_ = conv("up.deconv", c, c, k, g, true);
    up_deconv_slope_ = slope("up.deconv");
    down_conv_ = conv("down.conv", c, c, k, g);
    down_conv_slope_ = slope("down.conv");
    down_blocks_ = blocks("down");
    res_blocks_ = blocks("res");
    res_deconv_ = conv("res.deconv", c, c, k, g, true);
    recon_ = conv("recon", config_.window_length() * c, 1, 3, {1, 1});
  }

  PrbpnConfig config_;
  std::vector<std::pair<std::string, Var>> params_;
  ConvLayer feat0_, featM_, attn_, up_conv_, up_deconv_, down_conv_, res_deconv_, recon_;
  Var feat0_slope_, featM_slope_, up_conv_slope_, up_deconv_slope_, down_conv_slope_;
  std::vector<ResBlock> up_blocks_, down_blocks_, res_blocks_;
};

}  // namespace tunnelwave
