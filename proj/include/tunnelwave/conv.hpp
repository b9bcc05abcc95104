// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tunnelwave Authors
#pragma once

#include <tunnelwave/tensor.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <string>
#include <vector>

// Plain (non-differentiable) 2-D convolution kernels on rank-4 tensors.
// Weights are (out_c, in_c, kh, kw) for conv2d. conv_transpose2d takes the
// same array as the conv2d it is the adjoint of, so its weight is laid out
// (in_c, out_c, kh, kw) from the point of view of its own input.

namespace tunnelwave::tc {

struct ConvGeometry {
  int stride = 1;
  int padding = 0;
};

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

/// col[(c*kh + ky)*kw + kx][oy*wo + ox] = x[c][oy*s - p + ky][ox*s - p + kx], zero outside.
inline void im2col(const double* x, int c_in, int h, int w, int kh, int kw, ConvGeometry g, int ho, int wo,
                   double* col) {
  const std::size_t p_out = static_cast<std::size_t>(ho) * wo;
  for (int c = 0; c < c_in; ++c)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        double* row = col + ((static_cast<std::size_t>(c) * kh + ky) * kw + kx) * p_out;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * g.stride - g.padding + ky;
          double* out = row + static_cast<std::size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(out, out + wo, 0.0);
            continue;
          }
          const double* src = x + (static_cast<std::size_t>(c) * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * g.stride - g.padding + kx;
            out[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
          }
        }
      }
}

/// Adjoint of im2col: scatters (accumulates) columns back into x.
inline void col2im(const double* col, int c_in, int h, int w, int kh, int kw, ConvGeometry g, int ho, int wo,
                   double* x) {
  const std::size_t p_out = static_cast<std::size_t>(ho) * wo;
  for (int c = 0; c < c_in; ++c)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        const double* row = col + ((static_cast<std::size_t>(c) * kh + ky) * kw + kx) * p_out;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= h) continue;
          const double* in = row + static_cast<std::size_t>(oy) * wo;
          double* dst = x + (static_cast<std::size_t>(c) * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * g.stride - g.padding + kx;
            if (ix >= 0 && ix < w) dst[ix] += in[ox];
          }
        }
      }
}

/// Stride-1 convolutions with few output channels skip im2col: the column
/// matrix would be c_in*kh*kw times larger than the output.
inline bool use_direct(int c_out, ConvGeometry g) { return g.stride == 1 && c_out <= 4; }

/// y[o] += sum_c sum_k w[o,c,k] * x[c] shifted by k; one plane per (b, o).
inline void direct_forward(const double* x, const double* w, int c_in, int h, int wd, int c_out, int kh, int kw,
                           int pad, int ho, int wo, double* y) {
  for (int o = 0; o < c_out; ++o) {
    double* yo = y + static_cast<std::size_t>(o) * ho * wo;
    for (int c = 0; c < c_in; ++c) {
      const double* xc = x + static_cast<std::size_t>(c) * h * wd;
      for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx) {
          const double wk = w[((static_cast<std::size_t>(o) * c_in + c) * kh + ky) * kw + kx];
          const int ox_lo = std::max(0, pad - kx), ox_hi = std::min(wo, wd + pad - kx);
          const int n = ox_hi - ox_lo;
          if (n <= 0) continue;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy - pad + ky;
            if (iy < 0 || iy >= h) continue;
            Eigen::Map<Eigen::ArrayXd>(yo + static_cast<std::size_t>(oy) * wo + ox_lo, n) +=
                wk * Eigen::Map<const Eigen::ArrayXd>(xc + static_cast<std::size_t>(iy) * wd + (kx - pad) + ox_lo, n);
          }
        }
    }
  }
}

/// Accumulates dx and dw for `direct_forward`.
inline void direct_backward(const double* x, const double* w, const double* dy, int c_in, int h, int wd, int c_out,
                            int kh, int kw, int pad, int ho, int wo, double* dx, double* dw) {
  for (int o = 0; o < c_out; ++o) {
    const double* go = dy + static_cast<std::size_t>(o) * ho * wo;
    for (int c = 0; c < c_in; ++c) {
      const double* xc = x + static_cast<std::size_t>(c) * h * wd;
      double* dxc = dx ? dx + static_cast<std::size_t>(c) * h * wd : nullptr;
      for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx) {
          const std::size_t wi = ((static_cast<std::size_t>(o) * c_in + c) * kh + ky) * kw + kx;
          const double wk = w[wi];
          const int ox_lo = std::max(0, pad - kx), ox_hi = std::min(wo, wd + pad - kx);
          const int n = ox_hi - ox_lo;
          if (n <= 0) continue;
          double acc = 0.0;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy - pad + ky;
            if (iy < 0 || iy >= h) continue;
            const std::size_t off = static_cast<std::size_t>(iy) * wd + (kx - pad) + ox_lo;
            Eigen::Map<const Eigen::ArrayXd> g(go + static_cast<std::size_t>(oy) * wo + ox_lo, n);
            if (dw) acc += (g * Eigen::Map<const Eigen::ArrayXd>(xc + off, n)).sum();
            if (dxc) Eigen::Map<Eigen::ArrayXd>(dxc + off, n) += wk * g;
          }
          if (dw) dw[wi] += acc;
        }
    }
  }
}

inline void check_geometry(int kh, int kw, ConvGeometry g, const char* what) {
  if (kh < 1 || kw < 1 || g.stride < 1 || g.padding < 0) {
    throw InvalidArgument(std::string(what) + ": invalid kernel/stride/padding");
  }
}

}  // namespace detail

/// Output size of a convolution; throws unless (in + 2p - k) is a non-negative multiple of s.
inline int conv_output_size(int in, int k, ConvGeometry g) {
  const int num = in + 2 * g.padding - k;
  if (num < 0 || num % g.stride != 0) {
    throw InvalidArgument("conv2d: (" + std::to_string(in) + " + 2*" + std::to_string(g.padding) + " - " +
                          std::to_string(k) + ") / " + std::to_string(g.stride) + " is not a whole number of steps");
  }
  return num / g.stride + 1;
}

inline int conv_transpose_output_size(int in, int k, ConvGeometry g) {
  const int out = (in - 1) * g.stride - 2 * g.padding + k;
  if (out < 1) throw InvalidArgument("conv_transpose2d: non-positive output size");
  return out;
}

inline void check_conv_args(const Tensor& x, const Tensor& w, const Tensor* bias, int x_channel_dim, int bias_dim,
                            const char* what) {
  require_rank4(x, what);
  require_rank4(w, what);
  if (x.channels() != w.dim(x_channel_dim)) {
    throw InvalidArgument(std::string(what) + ": input has " + std::to_string(x.channels()) +
                          " channels, weight expects " + std::to_string(w.dim(x_channel_dim)));
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != w.dim(bias_dim))) {
    throw InvalidArgument(std::string(what) + ": bias shape " + bias->shape_string() + " does not match weight " +
                          w.shape_string());
  }
}

inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, ConvGeometry g) {
  check_conv_args(x, w, bias, 1, 0, "conv2d");
  const int kh = w.dim(2), kw = w.dim(3), c_out = w.dim(0), c_in = w.dim(1);
  detail::check_geometry(kh, kw, g, "conv2d");
  const int ho = conv_output_size(x.height(), kh, g), wo = conv_output_size(x.width(), kw, g);
  const int k = c_in * kh * kw;
  const int p = ho * wo;
  Tensor y({x.batch(), c_out, ho, wo});
  if (detail::use_direct(c_out, g)) {
    for (int b = 0; b < x.batch(); ++b) {
      double* yb = y.data() + static_cast<std::size_t>(b) * c_out * p;
      detail::direct_forward(x.data() + b * x.channels() * x.plane(), w.data(), c_in, x.height(), x.width(), c_out,
                             kh, kw, g.padding, ho, wo, yb);
      if (bias)
        for (int o = 0; o < c_out; ++o)
          for (int q = 0; q < p; ++q) yb[static_cast<std::size_t>(o) * p + q] += (*bias)[o];
    }
    return y;
  }
  std::vector<double> col(static_cast<std::size_t>(k) * p);
  detail::CMapMat wm(w.data(), c_out, k);
  for (int b = 0; b < x.batch(); ++b) {
    detail::im2col(x.data() + b * x.channels() * x.plane(), c_in, x.height(), x.width(), kh, kw, g, ho, wo,
                   col.data());
    detail::MapMat out(y.data() + static_cast<std::size_t>(b) * c_out * p, c_out, p);
    out.noalias() = wm * detail::CMapMat(col.data(), k, p);
    if (bias)
      for (int o = 0; o < c_out; ++o) out.row(o).array() += (*bias)[o];
  }
  return y;
}

inline Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor* bias, ConvGeometry g) {
  check_conv_args(x, w, bias, 0, 1, "conv_transpose2d");
  const int kh = w.dim(2), kw = w.dim(3), c_in = w.dim(0), c_out = w.dim(1);
  detail::check_geometry(kh, kw, g, "conv_transpose2d");
  const int ho = conv_transpose_output_size(x.height(), kh, g), wo = conv_transpose_output_size(x.width(), kw, g);
  const int k = c_out * kh * kw;
  const int p = x.height() * x.width();
  Tensor y({x.batch(), c_out, ho, wo});
  std::vector<double> col(static_cast<std::size_t>(k) * p);
  detail::CMapMat wm(w.data(), c_in, k);
  for (int b = 0; b < x.batch(); ++b) {
    detail::MapMat cm(col.data(), k, p);
    cm.noalias() = wm.transpose() * detail::CMapMat(x.data() + static_cast<std::size_t>(b) * c_in * p, c_in, p);
    double* dst = y.data() + static_cast<std::size_t>(b) * c_out * ho * wo;
    detail::col2im(col.data(), c_out, ho, wo, kh, kw, g, x.height(), x.width(), dst);
    if (bias)
      for (int o = 0; o < c_out; ++o) {
        double* plane = dst + static_cast<std::size_t>(o) * ho * wo;
        for (int q = 0; q < ho * wo; ++q) plane[q] += (*bias)[o];
      }
  }
  return y;
}

/// Gradients of conv2d given dL/dy. `dx`, `dw`, `db` may be null; non-null
/// outputs are accumulated into.
inline void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy, ConvGeometry g, Tensor* dx,
                            Tensor* dw, Tensor* db) {
  const int kh = w.dim(2), kw = w.dim(3), c_out = w.dim(0), c_in = w.dim(1);
  const int ho = dy.height(), wo = dy.width();
  const int k = c_in * kh * kw;
  const int p = ho * wo;
  if (detail::use_direct(c_out, g)) {
    for (int b = 0; b < x.batch(); ++b) {
      const std::size_t xoff = static_cast<std::size_t>(b) * x.channels() * x.plane();
      const double* gy = dy.data() + static_cast<std::size_t>(b) * c_out * p;
      if (dx || dw) {
        detail::direct_backward(x.data() + xoff, w.data(), gy, c_in, x.height(), x.width(), c_out, kh, kw,
                                g.padding, ho, wo, dx ? dx->data() + xoff : nullptr, dw ? dw->data() : nullptr);
      }
      if (db)
        for (int o = 0; o < c_out; ++o) {
          double s = 0.0;
          for (int q = 0; q < p; ++q) s += gy[static_cast<std::size_t>(o) * p + q];
          (*db)[o] += s;
        }
    }
    return;
  }
  std::vector<double> col(static_cast<std::size_t>(k) * p);
  detail::CMapMat wm(w.data(), c_out, k);
  for (int b = 0; b < x.batch(); ++b) {
    detail::CMapMat g_out(dy.data() + static_cast<std::size_t>(b) * c_out * p, c_out, p);
    if (dw) {
      detail::im2col(x.data() + b * x.channels() * x.plane(), c_in, x.height(), x.width(), kh, kw, g, ho, wo,
                     col.data());
      detail::MapMat(dw->data(), c_out, k).noalias() += g_out * detail::CMapMat(col.data(), k, p).transpose();
    }
    if (dx) {
      detail::MapMat cm(col.data(), k, p);
      cm.noalias() = wm.transpose() * g_out;
      detail::col2im(col.data(), c_in, x.height(), x.width(), kh, kw, g, ho, wo,
                     dx->data() + b * x.channels() * x.plane());
    }
    if (db)
      for (int o = 0; o < c_out; ++o) (*db)[o] += g_out.row(o).sum();
  }
}

inline void conv_transpose2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy, ConvGeometry g, Tensor* dx,
                                      Tensor* dw, Tensor* db) {
  const int kh = w.dim(2), kw = w.dim(3), c_in = w.dim(0), c_out = w.dim(1);
  const int k = c_out * kh * kw;
  const int p = x.height() * x.width();
  const std::size_t out_plane = dy.plane();
  std::vector<double> col(static_cast<std::size_t>(k) * p);
  detail::CMapMat wm(w.data(), c_in, k);
  for (int b = 0; b < x.batch(); ++b) {
    const double* gy = dy.data() + static_cast<std::size_t>(b) * c_out * out_plane;
    if (dx || dw) {
      detail::im2col(gy, c_out, dy.height(), dy.width(), kh, kw, g, x.height(), x.width(), col.data());
      detail::CMapMat cm(col.data(), k, p);
      if (dx) {
        detail::MapMat(dx->data() + static_cast<std::size_t>(b) * c_in * p, c_in, p).noalias() += wm * cm;
      }
      if (dw) {
        detail::CMapMat xb(x.data() + static_cast<std::size_t>(b) * c_in * p, c_in, p);
        detail::MapMat(dw->data(), c_in, k).noalias() += xb * cm.transpose();
      }
    }
    if (db)
      for (int o = 0; o < c_out; ++o) {
        const double* plane = gy + o * out_plane;
        double s = 0.0;
        for (std::size_t q = 0; q < out_plane; ++q) s += plane[q];
        (*db)[o] += s;
      }
  }
}

}  // namespace tunnelwave::tc
