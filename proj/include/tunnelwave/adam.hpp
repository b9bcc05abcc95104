// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tunnelwave Authors
#pragma once

#include <tunnelwave/autograd.hpp>
#include <tunnelwave/error.hpp>
#include <tunnelwave/tensor.hpp>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace tunnelwave::tc {

struct AdamHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Rounds every element to the nearest float32.
inline void round_to_float(Tensor& t) {
  for (auto& v : t.values()) v = static_cast<double>(static_cast<float>(v));
}

/// Adam with bias correction. With `float32_state` the parameters and both
/// moments are rounded to float32 after every step, so a float32 checkpoint
/// captures the optimiser state exactly and a resumed run continues bit for bit.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Var> params, AdamHyper hyper = {}, bool float32_state = true)
      : params_(std::move(params)), hyper_(hyper), float32_(float32_state) {
    for (const auto& p : params_) {
      m_.push_back(Tensor::zeros_like(p.value()));
      v_.push_back(Tensor::zeros_like(p.value()));
    }
  }

  /// One update from the gradients currently held by the parameters.
  void step() {
    std::vector<Tensor> grads;
    grads.reserve(params_.size());
    for (auto& p : params_) grads.push_back(p.grad());
    step(grads);
  }

  void step(const std::vector<Tensor>& grads) {
    if (grads.size() != params_.size()) throw InvalidArgument("adam: gradient count does not match parameters");
    ++step_;
    const double c1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& w = params_[i].mutable_value();
      const auto& g = grads[i];
      require_same_shape(w, g, "adam");
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t k = 0; k < w.size(); ++k) {
        m[k] = hyper_.beta1 * m[k] + (1.0 - hyper_.beta1) * g[k];
        v[k] = hyper_.beta2 * v[k] + (1.0 - hyper_.beta2) * g[k] * g[k];
        const double mhat = m[k] / c1;
        const double vhat = v[k] / c2;
        w[k] -= hyper_.lr * mhat / (std::sqrt(vhat) + hyper_.eps);
      }
      if (float32_) {
        round_to_float(w);
        round_to_float(m);
        round_to_float(v);
      }
      if (!w.all_finite()) throw NumericError("adam: non-finite parameter after step " + std::to_string(step_));
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  const AdamHyper& hyper() const { return hyper_; }
  void set_lr(double lr) { hyper_.lr = lr; }
  std::uint64_t step_count() const { return step_; }
  void set_step_count(std::uint64_t s) { step_ = s; }
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  const std::vector<Var>& params() const { return params_; }

 private:
  std::vector<Var> params_;
  AdamHyper hyper_;
  bool float32_ = true;
  std::uint64_t step_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace tunnelwave::tc
