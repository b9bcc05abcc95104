// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tunnelwave Authors
#pragma once

#include <tunnelwave/error.hpp>

#include <fftw3.h>

#include <complex>
#include <cstdlib>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <utility>

namespace tunnelwave {

namespace detail {

struct FftPlans {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
  ~FftPlans() {
    if (forward) fftw_destroy_plan(forward);
    if (inverse) fftw_destroy_plan(inverse);
  }
};

// FFTW planning is not thread-safe; plans are created under a lock and then
// executed concurrently through the new-array interface.
class FftPlanCache {
 public:
  static FftPlanCache& instance() {
    static FftPlanCache cache;
    return cache;
  }

  std::shared_ptr<const FftPlans> get(int nx, int ny) {
    std::lock_guard lock(mutex_);
    auto key = std::make_pair(nx, ny);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    load_wisdom();
    auto* scratch = fftw_alloc_complex(static_cast<std::size_t>(nx) * ny);
    auto plans = std::make_shared<FftPlans>();
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    plans->forward = fftw_plan_dft_2d(ny, nx, scratch, scratch, FFTW_FORWARD, flags);
    plans->inverse = fftw_plan_dft_2d(ny, nx, scratch, scratch, FFTW_BACKWARD, flags);
    fftw_free(scratch);
    if (!plans->forward || !plans->inverse) throw Error("FFTW planning failed");
    save_wisdom();
    plans_.emplace(key, plans);
    return plans;
  }

 private:
  static std::string wisdom_path() {
    const char* dir = std::getenv("TUNNELWAVE_CACHE");
    if (!dir || !*dir) return {};
    return std::string(dir) + "/fftw_wisdom";
  }
  void load_wisdom() {
    if (wisdom_loaded_) return;
    wisdom_loaded_ = true;
    if (auto path = wisdom_path(); !path.empty()) fftw_import_wisdom_from_filename(path.c_str());
  }
  static void save_wisdom() {
    if (auto path = wisdom_path(); !path.empty()) fftw_export_wisdom_to_filename(path.c_str());
  }

  std::mutex mutex_;
  bool wisdom_loaded_ = false;
  std::map<std::pair<int, int>, std::shared_ptr<const FftPlans>> plans_;
};

}  // namespace detail

/// In-place 2-D complex FFT over a row-major (ny rows x nx columns) array.
/// The inverse is scaled by 1/(nx*ny) so inverse(forward(u)) == u.
class Fft2d {
 public:
  Fft2d(int nx, int ny) : nx_(nx), ny_(ny), plans_(detail::FftPlanCache::instance().get(nx, ny)) {}

  void forward(std::span<std::complex<double>> data) const { run(plans_->forward, data); }

  void inverse(std::span<std::complex<double>> data) const {
    run(plans_->inverse, data);
    const double scale = 1.0 / (static_cast<double>(nx_) * ny_);
    for (auto& v : data) v *= scale;
  }

  /// Backward transform without the 1/N scale (for callers that fold it elsewhere).
  void inverse_unscaled(std::span<std::complex<double>> data) const { run(plans_->inverse, data); }

  int nx() const { return nx_; }
  int ny() const { return ny_; }

 private:
  void run(fftw_plan plan, std::span<std::complex<double>> data) const {
    if (data.size() != static_cast<std::size_t>(nx_) * ny_) throw InvalidArgument("FFT buffer size mismatch");
    auto* p = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(plan, p, p);
  }

  int nx_;
  int ny_;
  std::shared_ptr<const detail::FftPlans> plans_;
};

}  // namespace tunnelwave
