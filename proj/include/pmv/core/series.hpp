#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "pmv/core/constants.hpp"

namespace pmv {

/// Complex range-bin value per frame for one steering direction.
struct SlowTimeSeries {
  std::size_t direction = 0;
  std::size_t range_bin = 0;
  std::vector<cd> samples;
  double sample_rate_hz = 20.0;

  std::size_t size() const { return samples.size(); }
};

struct PhaseSeries {
  std::vector<double> values;  // radians
  double sample_rate_hz = 20.0;

  std::size_t size() const { return values.size(); }
};

/// Sliding analysis window, in seconds.
struct WindowSpec {
  double window_s = 60.0;
  double step_s = 1.0;

  std::size_t window_samples(double fs) const {
    return static_cast<std::size_t>(std::llround(window_s * fs));
  }
  std::size_t step_samples(double fs) const {
    return static_cast<std::size_t>(std::llround(step_s * fs));
  }
  /// Number of full windows that fit in `n` samples.
  std::size_t count(std::size_t n, double fs) const {
    const auto w = window_samples(fs);
    const auto s = step_samples(fs);
    if (w == 0 || s == 0 || n < w) return 0;
    return (n - w) / s + 1;
  }
};

}  // namespace pmv
