#pragma once

// Thin FFTW wrapper. Plans are created once per length under a lock and then
// executed through the new-array interface, which is safe across threads.

#include <fftw3.h>

#include <complex>
#include <map>
#include <mutex>
#include <span>
#include <utility>
#include <vector>

#include "pmv/core/constants.hpp"
#include "pmv/core/error.hpp"

namespace pmv {

namespace detail {

enum class PlanKind { c2c_forward, c2c_backward, r2c };

class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(PlanKind kind, int n) {
    std::lock_guard lock(mutex_);
    auto it = plans_.find({kind, n});
    if (it != plans_.end()) return it->second;
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    fftw_plan plan = nullptr;
    if (kind == PlanKind::r2c) {
      std::vector<double> in(static_cast<std::size_t>(n));
      std::vector<fftw_complex> out(static_cast<std::size_t>(n / 2 + 1));
      plan = fftw_plan_dft_r2c_1d(n, in.data(), out.data(), flags);
    } else {
      std::vector<fftw_complex> in(static_cast<std::size_t>(n)), out(static_cast<std::size_t>(n));
      plan = fftw_plan_dft_1d(n, in.data(), out.data(),
                              kind == PlanKind::c2c_forward ? FFTW_FORWARD : FFTW_BACKWARD, flags);
    }
    if (!plan) throw Error("FFTW planning failed for length " + std::to_string(n));
    plans_.emplace(std::pair{kind, n}, plan);
    return plan;
  }

  ~PlanCache() {
    for (auto& [_, p] : plans_) fftw_destroy_plan(p);
  }

 private:
  PlanCache() = default;
  std::mutex mutex_;
  std::map<std::pair<PlanKind, int>, fftw_plan> plans_;
};

}  // namespace detail

/// Unnormalized forward DFT, X[h] = sum_k x[k] exp(-j 2 pi h k / n). `out` must not alias `in`.
inline void fft_forward(const cd* in, cd* out, std::size_t n) {
  if (n == 0) return;
  auto plan = detail::PlanCache::instance().get(detail::PlanKind::c2c_forward, static_cast<int>(n));
  fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(const_cast<cd*>(in)),
                   reinterpret_cast<fftw_complex*>(out));
}

inline std::vector<cd> fft_forward(std::span<const cd> x) {
  std::vector<cd> out(x.size());
  fft_forward(x.data(), out.data(), x.size());
  return out;
}

/// Unnormalized inverse DFT.
inline std::vector<cd> fft_backward(std::span<const cd> x) {
  std::vector<cd> out(x.size());
  if (x.empty()) return out;
  auto plan = detail::PlanCache::instance().get(detail::PlanKind::c2c_backward,
                                                static_cast<int>(x.size()));
  fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(const_cast<cd*>(x.data())),
                   reinterpret_cast<fftw_complex*>(out.data()));
  return out;
}

/// One-sided spectrum of a real signal zero-padded to `nfft` (bins 0..nfft/2).
inline std::vector<cd> rfft_padded(std::span<const double> x, std::size_t nfft) {
  if (nfft < x.size()) throw DimensionError("rfft_padded: nfft shorter than input");
  std::vector<double> buf(nfft, 0.0);
  std::copy(x.begin(), x.end(), buf.begin());
  std::vector<cd> out(nfft / 2 + 1);
  auto plan = detail::PlanCache::instance().get(detail::PlanKind::r2c, static_cast<int>(nfft));
  fftw_execute_dft_r2c(plan, buf.data(), reinterpret_cast<fftw_complex*>(out.data()));
  return out;
}

}  // namespace pmv
