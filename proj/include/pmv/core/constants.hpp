#pragma once

#include <complex>
#include <numbers>

namespace pmv {

using cd = std::complex<double>;
using cf = std::complex<float>;

inline constexpr double kSpeedOfLight = 299'792'458.0;  // m/s
inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

constexpr double deg_to_rad(double deg) noexcept { return deg * kPi / 180.0; }
constexpr double rad_to_deg(double rad) noexcept { return rad * 180.0 / kPi; }

/// exp(j*2*pi*cycles), the phase convention used throughout.
inline cd cis_cycles(double cycles) { return std::polar(1.0, kTwoPi * cycles); }

}  // namespace pmv
