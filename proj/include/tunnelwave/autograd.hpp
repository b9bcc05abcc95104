// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tunnelwave Authors
#pragma once

#include <tunnelwave/conv.hpp>
#include <tunnelwave/error.hpp>
#include <tunnelwave/tensor.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

namespace tunnelwave::tc {

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;  // pushes this->grad into parents
  bool requires_grad = false;
  const char* op = "leaf";

  Tensor& ensure_grad() {
    if (grad.size() != value.size()) grad = Tensor::zeros_like(value);
    return grad;
  }
};

/// Handle to a node of the computation graph. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const std::vector<int>& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  const std::shared_ptr<Node>& node() const { return node_; }
  bool defined() const { return node_ != nullptr; }

  /// Gradient after backward(); zeros if nothing reached this node.
  const Tensor& grad() const { return node_->ensure_grad(); }
  void zero_grad() { node_->grad = Tensor::zeros_like(node_->value); }

 private:
  std::shared_ptr<Node> node_;
};

// ---------------------------------------------------------------------------
// Graph recording switches

namespace detail {
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}
inline std::string& fault_op() {
  static std::string op;
  return op;
}
}  // namespace detail

/// Disables graph recording in its scope (inference).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Test hook: makes the backward pass of the named op return twice its true
/// gradient, so the gradient checker can prove it detects bugs. Empty clears.
inline void inject_gradient_fault(std::string op) { detail::fault_op() = std::move(op); }
inline double fault_scale(std::string_view op) { return detail::fault_op() == op ? 2.0 : 1.0; }

inline Var make_op(Tensor value, std::vector<Var> inputs, const char* op, std::function<void(Node&)> backward) {
  if (!value.all_finite()) throw NumericError(std::string(op) + ": non-finite value");
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (any && detail::grad_mode()) {
    node->requires_grad = true;
    for (auto& in : inputs) node->parents.push_back(in.node());
    node->backward = std::move(backward);
  }
  return Var(std::move(node));
}

/// Reverse-mode accumulation from a scalar. Gradients accumulate into every
/// reachable node that requires them; call zero_grad() between steps.
inline void backward(const Var& loss) {
  if (loss.value().size() != 1) {
    throw InvalidArgument("backward: loss must be a scalar, got shape " + loss.value().shape_string());
  }
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  loss.node()->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() == n->value.size()) n->backward(*n);
  }
}

namespace detail {

/// Neumaier-compensated running sum; keeps reductions accurate enough for
/// central differences at h = 1e-6.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    comp_ += std::abs(sum_) >= std::abs(v) ? (sum_ - t) + v : (v - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

template <typename F>
Var unary(const Var& a, const char* op, F&& forward, std::function<void(Node&)> back) {
  Tensor y = Tensor::zeros_like(a.value());
  for (std::size_t k = 0; k < y.size(); ++k) y[k] = forward(a.value()[k]);
  return make_op(std::move(y), {a}, op, std::move(back));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops

inline Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor y = a.value();
  for (std::size_t k = 0; k < y.size(); ++k) y[k] += b.value()[k];
  return make_op(std::move(y), {a, b}, "add", [](Node& n) {
    const double s = fault_scale("add");
    for (auto& p : n.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->ensure_grad();
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += s * n.grad[k];
    }
  });
}

inline Var sub(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor y = a.value();
  for (std::size_t k = 0; k < y.size(); ++k) y[k] -= b.value()[k];
  return make_op(std::move(y), {a, b}, "sub", [](Node& n) {
    const double s = fault_scale("sub");
    for (int side = 0; side < 2; ++side) {
      auto& p = n.parents[side];
      if (!p->requires_grad) continue;
      auto& g = p->ensure_grad();
      const double sign = side == 0 ? s : -s;
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += sign * n.grad[k];
    }
  });
}

inline Var mul(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor y = a.value();
  for (std::size_t k = 0; k < y.size(); ++k) y[k] *= b.value()[k];
  return make_op(std::move(y), {a, b}, "mul", [](Node& n) {
    const double s = fault_scale("mul");
    auto& pa = n.parents[0];
    auto& pb = n.parents[1];
    if (pa->requires_grad) {
      auto& g = pa->ensure_grad();
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += s * n.grad[k] * pb->value[k];
    }
    if (pb->requires_grad) {
      auto& g = pb->ensure_grad();
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += s * n.grad[k] * pa->value[k];
    }
  });
}

inline Var scale(const Var& a, double c) {
  return detail::unary(a, "scale", [c](double v) { return c * v; }, [c](Node& n) {
    const double s = fault_scale("scale");
    auto& g = n.parents[0]->ensure_grad();
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += s * c * n.grad[k];
  });
}

inline Var add_scalar(const Var& a, double c) {
  return detail::unary(a, "add_scalar", [c](double v) { return v + c; }, [](Node& n) {
    const double s = fault_scale("add_scalar");
    auto& g = n.parents[0]->ensure_grad();
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += s * n.grad[k];
  });
}

/// |x| with subgradient 0 at x = 0.
inline Var abs(const Var& a) {
  return detail::unary(a, "abs", [](double v) { return std::abs(v); }, [](Node& n) {
    const double s = fault_scale("abs");
    auto& p = n.parents[0];
    auto& g = p->ensure_grad();
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double x = p->value[k];
      g[k] += s * n.grad[k] * (x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0));
    }
  });
}

/// Logistic function; evaluated through exp(-|x|) so it never overflows.
inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Var sigmoid(const Var& a) {
  return detail::unary(a, "sigmoid", stable_sigmoid, [](Node& n) {
    const double s = fault_scale("sigmoid");
    auto& g = n.parents[0]->ensure_grad();
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double y = n.value[k];
      g[k] += s * n.grad[k] * y * (1.0 - y);
    }
  });
}

/// y = x for x >= 0, slope * x otherwise; `slope` is a learnable one-element tensor.
inline Var prelu(const Var& x, const Var& slope) {
  if (slope.value().size() != 1) throw InvalidArgument("prelu: slope must have one element");
  const double a = slope.value()[0];
  Tensor y = x.value();
  for (auto& v : y.values())
    if (v < 0.0) v *= a;
  return make_op(std::move(y), {x, slope}, "prelu", [](Node& n) {
    const double s = fault_scale("prelu");
    auto& px = n.parents[0];
    auto& pa = n.parents[1];
    const double a = pa->value[0];
    if (px->requires_grad) {
      auto& g = px->ensure_grad();
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += s * n.grad[k] * (px->value[k] >= 0.0 ? 1.0 : a);
    }
    if (pa->requires_grad) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n.grad.size(); ++k)
        if (px->value[k] < 0.0) acc += n.grad[k] * px->value[k];
      pa->ensure_grad()[0] += s * acc;
    }
  });
}

// ---------------------------------------------------------------------------
// Channel ops (rank 4)

/// x (B, C, H, W) times m (B, 1, H, W) broadcast over channels.
inline Var mul_channels(const Var& x, const Var& m) {
  const auto& xv = x.value();
  const auto& mv = m.value();
  require_rank4(xv, "mul_channels");
  require_rank4(mv, "mul_channels");
  if (mv.channels() != 1 || mv.batch() != xv.batch() || mv.height() != xv.height() || mv.width() != xv.width()) {
    throw InvalidArgument("mul_channels: mask " + mv.shape_string() + " does not broadcast over " + xv.shape_string());
  }
  Tensor y = xv;
  const std::size_t plane = xv.plane();
  for (int b = 0; b < xv.batch(); ++b)
    for (int c = 0; c < xv.channels(); ++c) {
      double* yp = y.data() + (static_cast<std::size_t>(b) * xv.channels() + c) * plane;
      const double* mp = mv.data() + b * plane;
      for (std::size_t q = 0; q < plane; ++q) yp[q] *= mp[q];
    }
  return make_op(std::move(y), {x, m}, "mul_channels", [](Node& n) {
    const double s = fault_scale("mul_channels");
    auto& px = n.parents[0];
    auto& pm = n.parents[1];
    const auto& xv = px->value;
    const std::size_t plane = xv.plane();
    for (int b = 0; b < xv.batch(); ++b)
      for (int c = 0; c < xv.channels(); ++c) {
        const std::size_t off = (static_cast<std::size_t>(b) * xv.channels() + c) * plane;
        const double* gy = n.grad.data() + off;
        if (px->requires_grad) {
          double* gx = px->ensure_grad().data() + off;
          const double* mp = pm->value.data() + b * plane;
          for (std::size_t q = 0; q < plane; ++q) gx[q] += s * gy[q] * mp[q];
        }
        if (pm->requires_grad) {
          double* gm = pm->ensure_grad().data() + b * plane;
          const double* xp = xv.data() + off;
          for (std::size_t q = 0; q < plane; ++q) gm[q] += s * gy[q] * xp[q];
        }
      }
  });
}

/// Mean over the channel axis: (B, C, H, W) -> (B, 1, H, W).
inline Var mean_channels(const Var& x) {
  const auto& xv = x.value();
  require_rank4(xv, "mean_channels");
  Tensor y({xv.batch(), 1, xv.height(), xv.width()});
  const std::size_t plane = xv.plane();
  const double inv = 1.0 / xv.channels();
  for (int b = 0; b < xv.batch(); ++b)
    for (int c = 0; c < xv.channels(); ++c) {
      const double* xp = xv.data() + (static_cast<std::size_t>(b) * xv.channels() + c) * plane;
      double* yp = y.data() + b * plane;
      for (std::size_t q = 0; q < plane; ++q) yp[q] += xp[q] * inv;
    }
  return make_op(std::move(y), {x}, "mean_channels", [](Node& n) {
    const double s = fault_scale("mean_channels");
    auto& px = n.parents[0];
    auto& g = px->ensure_grad();
    const std::size_t plane = g.plane();
    const double inv = 1.0 / g.channels();
    for (int b = 0; b < g.batch(); ++b)
      for (int c = 0; c < g.channels(); ++c) {
        double* gp = g.data() + (static_cast<std::size_t>(b) * g.channels() + c) * plane;
        const double* gy = n.grad.data() + b * plane;
        for (std::size_t q = 0; q < plane; ++q) gp[q] += s * gy[q] * inv;
      }
  });
}

inline Var concat_channels(const std::vector<Var>& xs) {
  if (xs.empty()) throw InvalidArgument("concat_channels: no inputs");
  const auto& first = xs.front().value();
  require_rank4(first, "concat_channels");
  int channels = 0;
  for (const auto& x : xs) {
    const auto& v = x.value();
    require_rank4(v, "concat_channels");
    if (v.batch() != first.batch() || v.height() != first.height() || v.width() != first.width()) {
      throw InvalidArgument("concat_channels: " + v.shape_string() + " does not match " + first.shape_string());
    }
    channels += v.channels();
  }
  Tensor y({first.batch(), channels, first.height(), first.width()});
  const std::size_t plane = first.plane();
  for (int b = 0; b < first.batch(); ++b) {
    double* dst = y.data() + static_cast<std::size_t>(b) * channels * plane;
    for (const auto& x : xs) {
      const auto& v = x.value();
      const std::size_t len = v.channels() * plane;
      std::copy_n(v.data() + b * len, len, dst);
      dst += len;
    }
  }
  return make_op(std::move(y), xs, "concat_channels", [](Node& n) {
    const double s = fault_scale("concat_channels");
    const int total = n.value.channels();
    const std::size_t plane = n.value.plane();
    for (int b = 0; b < n.value.batch(); ++b) {
      const double* src = n.grad.data() + static_cast<std::size_t>(b) * total * plane;
      for (auto& p : n.parents) {
        const std::size_t len = p->value.channels() * plane;
        if (p->requires_grad) {
          double* g = p->ensure_grad().data() + b * len;
          for (std::size_t q = 0; q < len; ++q) g[q] += s * src[q];
        }
        src += len;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions and losses

inline Var sum(const Var& a) {
  detail::CompensatedSum acc;
  for (double v : a.value().values()) acc.add(v);
  return make_op(Tensor::scalar(acc.value()), {a}, "sum", [](Node& n) {
    const double gy = fault_scale("sum") * n.grad[0];
    for (auto& v : n.parents[0]->ensure_grad().values()) v += gy;
  });
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

/// mean |a - b|; `b` is treated as data (no gradient).
inline Var l1_loss(const Var& a, const Tensor& b) {
  require_same_shape(a.value(), b, "l1_loss");
  detail::CompensatedSum acc;
  for (std::size_t k = 0; k < b.size(); ++k) acc.add(std::abs(a.value()[k] - b[k]));
  const double inv = 1.0 / static_cast<double>(b.size());
  auto target = std::make_shared<Tensor>(b);
  return make_op(Tensor::scalar(acc.value() * inv), {a}, "l1_loss", [target, inv](Node& n) {
    const double gy = fault_scale("l1_loss") * n.grad[0] * inv;
    auto& p = n.parents[0];
    auto& g = p->ensure_grad();
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double d = p->value[k] - (*target)[k];
      g[k] += gy * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
    }
  });
}

/// Anisotropic total variation: mean of |forward differences| along x and y,
/// pooled over all difference terms (the last row/column has none).
inline Var tv_loss(const Var& a) {
  const auto& v = a.value();
  require_rank4(v, "tv_loss");
  const int h = v.height(), w = v.width();
  const std::size_t terms = static_cast<std::size_t>(v.batch()) * v.channels() *
                            (static_cast<std::size_t>(h) * (w - 1) + static_cast<std::size_t>(h - 1) * w);
  if (terms == 0) return make_op(Tensor::scalar(0.0), {a}, "tv_loss", [](Node&) {});
  const double inv = 1.0 / static_cast<double>(terms);
  detail::CompensatedSum acc;
  for (int bc = 0; bc < v.batch() * v.channels(); ++bc) {
    const double* p = v.data() + static_cast<std::size_t>(bc) * h * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (x + 1 < w) acc.add(std::abs(p[y * w + x + 1] - p[y * w + x]));
        if (y + 1 < h) acc.add(std::abs(p[(y + 1) * w + x] - p[y * w + x]));
      }
  }
  return make_op(Tensor::scalar(acc.value() * inv), {a}, "tv_loss", [inv](Node& n) {
    const double gy = fault_scale("tv_loss") * n.grad[0] * inv;
    auto& par = n.parents[0];
    const auto& v = par->value;
    auto& g = par->ensure_grad();
    const int h = v.height(), w = v.width();
    auto sgn = [](double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); };
    for (int bc = 0; bc < v.batch() * v.channels(); ++bc) {
      const double* p = v.data() + static_cast<std::size_t>(bc) * h * w;
      double* q = g.data() + static_cast<std::size_t>(bc) * h * w;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const int i = y * w + x;
          if (x + 1 < w) {
            const double s = gy * sgn(p[i + 1] - p[i]);
            q[i + 1] += s;
            q[i] -= s;
          }
          if (y + 1 < h) {
            const double s = gy * sgn(p[i + w] - p[i]);
            q[i + w] += s;
            q[i] -= s;
          }
        }
    }
  });
}

// ---------------------------------------------------------------------------
// Convolutions

/// Cross-correlation with zero padding. `bias` may be an undefined Var.
inline Var conv2d(const Var& x, const Var& w, const Var& bias, ConvGeometry g) {
  const Tensor* bp = bias.defined() ? &bias.value() : nullptr;
  Tensor y = conv2d(x.value(), w.value(), bp, g);
  std::vector<Var> in{x, w};
  if (bias.defined()) in.push_back(bias);
  return make_op(std::move(y), in, "conv2d", [g](Node& n) {
    const double s = fault_scale("conv2d");
    auto& px = n.parents[0];
    auto& pw = n.parents[1];
    Node* pb = n.parents.size() > 2 ? n.parents[2].get() : nullptr;
    const Tensor* gy = &n.grad;
    Tensor scaled;
    if (s != 1.0) {
      scaled = n.grad;
      for (auto& v : scaled.values()) v *= s;
      gy = &scaled;
    }
    conv2d_backward(px->value, pw->value, *gy, g, px->requires_grad ? &px->ensure_grad() : nullptr,
                    pw->requires_grad ? &pw->ensure_grad() : nullptr,
                    pb && pb->requires_grad ? &pb->ensure_grad() : nullptr);
  });
}

/// Adjoint of conv2d with the same weight array, plus an output bias.
inline Var conv_transpose2d(const Var& x, const Var& w, const Var& bias, ConvGeometry g) {
  const Tensor* bp = bias.defined() ? &bias.value() : nullptr;
  Tensor y = conv_transpose2d(x.value(), w.value(), bp, g);
  std::vector<Var> in{x, w};
  if (bias.defined()) in.push_back(bias);
  return make_op(std::move(y), in, "conv_transpose2d", [g](Node& n) {
    const double s = fault_scale("conv_transpose2d");
    auto& px = n.parents[0];
    auto& pw = n.parents[1];
    Node* pb = n.parents.size() > 2 ? n.parents[2].get() : nullptr;
    const Tensor* gy = &n.grad;
    Tensor scaled;
    if (s != 1.0) {
      scaled = n.grad;
      for (auto& v : scaled.values()) v *= s;
      gy = &scaled;
    }
    conv_transpose2d_backward(px->value, pw->value, *gy, g, px->requires_grad ? &px->ensure_grad() : nullptr,
                              pw->requires_grad ? &pw->ensure_grad() : nullptr,
                              pb && pb->requires_grad ? &pb->ensure_grad() : nullptr);
  });
}

// ---------------------------------------------------------------------------
// Finite-difference checking

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "<input>[<index>]"
  std::size_t checked = 0;
};

/// Compares reverse-mode gradients of the scalar `f()` with respect to each
/// named leaf against central differences (step h). Relative error per
/// element is |a - n| / max(|n|, floor), so a gradient off by 2x scores 1.
inline GradCheckResult grad_check(const std::function<Var()>& f, std::vector<std::pair<std::string, Var>> inputs,
                                  double h = 1e-6, double floor = 1e-8) {
  for (auto& [name, v] : inputs) v.zero_grad();
  backward(f());
  GradCheckResult r;
  NoGradGuard no_grad;
  for (auto& [name, v] : inputs) {
    const Tensor analytic = v.grad();
    auto& values = v.mutable_value();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double saved = values[k];
      values[k] = saved + h;
      const double fp = f().value()[0];
      values[k] = saved - h;
      const double fm = f().value()[0];
      values[k] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      const double denom = std::max(std::abs(numeric), floor);
      const double err = std::abs(analytic[k] - numeric) / denom;
      ++r.checked;
      if (err > r.max_rel_error || r.worst.empty()) {
        r.max_rel_error = err;
        r.worst = name + "[" + std::to_string(k) + "]";
      }
    }
  }
  return r;
}

}  // namespace tunnelwave::tc
