#pragma once

// Range processing and angle estimation.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pmv/beamforming.hpp"
#include "pmv/core/config.hpp"
#include "pmv/core/constants.hpp"
#include "pmv/core/cube.hpp"
#include "pmv/core/error.hpp"
#include "pmv/core/fft.hpp"

namespace pmv {

enum class Taper { none, hann, hamming };

inline Taper parse_taper(const std::string& name) {
  if (name == "none") return Taper::none;
  if (name == "hann") return Taper::hann;
  if (name == "hamming") return Taper::hamming;
  throw ParseError("taper", "unknown taper '" + name + "'");
}

struct RangeProfile {
  std::vector<cd> bins;
  double bin_m = 0.0;  // c * adc_rate / (2 S N_s)

  std::size_t size() const { return bins.size(); }
  double range_of(std::size_t h) const { return static_cast<double>(h) * bin_m; }
};

inline double taper_weight(Taper t, std::size_t k, std::size_t n) {
  if (t == Taper::none || n < 2) return 1.0;
  const double x = kTwoPi * static_cast<double>(k) / static_cast<double>(n - 1);
  return t == Taper::hann ? 0.5 - 0.5 * std::cos(x) : 0.54 - 0.46 * std::cos(x);
}

/// N_s-point DFT of one chirp's beat samples.
inline RangeProfile range_dft(std::span<const cd> beat, const ChirpConfig& cfg,
                              Taper taper = Taper::none) {
  if (beat.size() != cfg.num_adc_samples)
    throw DimensionError("range_dft: expected " + std::to_string(cfg.num_adc_samples) +
                         " samples, got " + std::to_string(beat.size()));
  RangeProfile rp;
  rp.bin_m = cfg.range_bin_m();
  if (taper == Taper::none) {
    rp.bins = fft_forward(beat);
  } else {
    std::vector<cd> w(beat.begin(), beat.end());
    for (std::size_t k = 0; k < w.size(); ++k) w[k] *= taper_weight(taper, k, w.size());
    rp.bins = fft_forward(w);
  }
  return rp;
}

inline RangeProfile background_subtract(const RangeProfile& profile,
                                        const RangeProfile& background) {
  if (profile.size() != background.size())
    throw DimensionError("background_subtract: length " + std::to_string(profile.size()) +
                         " vs " + std::to_string(background.size()));
  RangeProfile out = profile;
  for (std::size_t h = 0; h < out.size(); ++h) out.bins[h] -= background.bins[h];
  return out;
}

/// Argmax of `magnitude` over [lo, hi); ties resolve to the lower bin.
inline std::size_t select_range_bin(std::span<const double> magnitude, std::size_t lo,
                                    std::size_t hi) {
  hi = std::min(hi, magnitude.size());
  if (lo >= hi) throw DimensionError("select_range_bin: empty search range");
  std::size_t best = lo;
  for (std::size_t h = lo + 1; h < hi; ++h)
    if (magnitude[h] > magnitude[best]) best = h;
  return best;
}

inline std::size_t select_range_bin(const RangeProfile& profile, std::size_t lo, std::size_t hi) {
  std::vector<double> mag(profile.size());
  for (std::size_t h = 0; h < mag.size(); ++h) mag[h] = std::abs(profile.bins[h]);
  return select_range_bin(mag, lo, hi);
}

// ---------------------------------------------------------------------------
// Angle spectrum
// ---------------------------------------------------------------------------

enum class AngleMethod { samv, beamform };

struct AngleGrid {
  double min_deg = -60.0;
  double max_deg = 60.0;
  double step_deg = 0.5;

  std::vector<double> angles_deg() const {
    std::vector<double> out;
    const int n = static_cast<int>(std::floor((max_deg - min_deg) / step_deg + 1e-9));
    for (int i = 0; i <= n; ++i) out.push_back(min_deg + i * step_deg);
    return out;
  }
};

struct AngleSpectrum {
  std::vector<double> theta_deg;
  std::vector<double> power;       // linear, >= 0
  std::vector<std::size_t> peaks;  // grid indices, strongest first
  std::size_t iterations = 0;
  bool converged = true;
  bool regularized = false;

  double power_db(std::size_t g) const {
    const double mx = *std::max_element(power.begin(), power.end());
    if (!(mx > 0.0)) return 0.0;
    return 10.0 * std::log10(std::max(power[g] / mx, 1e-30));
  }
  std::vector<double> peak_angles_deg() const {
    std::vector<double> out;
    for (auto g : peaks) out.push_back(theta_deg[g]);
    return out;
  }
};

struct AngleOptions {
  AngleMethod method = AngleMethod::samv;
  std::size_t max_iter = 30;
  double tol = 1e-6;
  double peak_floor_db = 10.0;
  std::size_t nms_bins = 3;
};

/// Local maxima within a `nms_bins`-wide neighbourhood and above max - floor_db,
/// strongest first.
inline std::vector<std::size_t> find_peaks(std::span<const double> power, double floor_db,
                                           std::size_t nms_bins) {
  std::vector<std::size_t> out;
  if (power.empty()) return out;
  const double mx = *std::max_element(power.begin(), power.end());
  if (!(mx > 0.0)) return out;
  const double floor_lin = mx * std::pow(10.0, -floor_db / 10.0);
  const std::size_t half = std::max<std::size_t>(1, nms_bins / 2);
  for (std::size_t g = 0; g < power.size(); ++g) {
    if (power[g] < floor_lin) continue;
    bool is_max = true;
    bool strictly = false;
    for (std::size_t d = 1; d <= half && is_max; ++d) {
      if (g >= d) {
        if (power[g - d] > power[g] || (d == 1 && power[g - d] == power[g])) is_max = false;
        if (power[g - d] < power[g]) strictly = true;
      }
      if (g + d < power.size()) {
        if (power[g + d] > power[g]) is_max = false;
        if (power[g + d] < power[g]) strictly = true;
      }
    }
    if (is_max && strictly) out.push_back(g);
  }
  std::stable_sort(out.begin(), out.end(),
                   [&](std::size_t a, std::size_t b) { return power[a] > power[b]; });
  return out;
}

/// Power spectrum over `grid` from snapshots Y (channels x snapshots), with
/// steering matrix A (channels x grid).
inline AngleSpectrum estimate_angle_spectrum(const Eigen::MatrixXcd& Y, const Eigen::MatrixXcd& A,
                                             const std::vector<double>& grid_deg,
                                             const AngleOptions& opt = {}) {
  const Eigen::Index M = Y.rows();
  const Eigen::Index L = Y.cols();
  const Eigen::Index G = A.cols();
  if (A.rows() != M) throw DimensionError("steering matrix rows must equal channel count");
  if (static_cast<std::size_t>(G) != grid_deg.size() || G == 0)
    throw DimensionError("angle grid size mismatch");
  if (L < 8) throw DimensionError("angle estimation needs at least 8 snapshots");

  AngleSpectrum out;
  out.theta_deg = grid_deg;
  out.power.assign(static_cast<std::size_t>(G), 0.0);

  const Eigen::MatrixXcd Rhat = (Y * Y.adjoint()) / static_cast<double>(L);
  const double tr = Rhat.trace().real();
  if (!(tr > 0.0)) {
    out.iterations = 0;
    return out;
  }

  Eigen::VectorXd p(G);
  for (Eigen::Index g = 0; g < G; ++g) {
    const auto a = A.col(g);
    const double n2 = a.squaredNorm();
    p(g) = std::max((a.adjoint() * Rhat * a)(0, 0).real(), 0.0) / (n2 * n2);
  }
  if (opt.method == AngleMethod::beamform) {
    for (Eigen::Index g = 0; g < G; ++g) out.power[static_cast<std::size_t>(g)] = p(g);
    out.peaks = find_peaks(out.power, opt.peak_floor_db, opt.nms_bins);
    return out;
  }

  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(Rhat);
  const auto& sv = svd.singularValues();
  const bool singular = sv(sv.size() - 1) <= 1e-10 * sv(0);
  out.regularized = singular;
  const double sigma_floor = singular ? tr / (static_cast<double>(M) * 100.0)
                                      : tr * 1e-9 / static_cast<double>(M);
  double sigma = tr / (static_cast<double>(M) * 100.0);

  out.converged = false;
  for (std::size_t it = 0; it < opt.max_iter; ++it) {
    Eigen::MatrixXcd R = A * p.asDiagonal() * A.adjoint();
    R.diagonal().array() += sigma;
    const Eigen::MatrixXcd Rinv = R.ldlt().solve(Eigen::MatrixXcd::Identity(M, M));
    const Eigen::MatrixXcd RiA = Rinv * A;
    const Eigen::MatrixXcd B = Rinv * Rhat * Rinv;
    Eigen::VectorXd next(G);
    for (Eigen::Index g = 0; g < G; ++g) {
      const auto a = A.col(g);
      const double num = (a.adjoint() * B * a)(0, 0).real();
      const double den = (a.adjoint() * RiA.col(g))(0, 0).real();
      next(g) = den > 0.0 ? std::max(p(g) * num / den, 0.0) : 0.0;
    }
    const Eigen::MatrixXcd Ri2 = Rinv * Rinv;
    const double s_num = (Ri2 * Rhat).trace().real();
    const double s_den = Ri2.trace().real();
    sigma = std::max(s_den > 0.0 ? s_num / s_den : sigma, sigma_floor);

    const double change = (next - p).norm() / std::max(p.norm(), 1e-300);
    p = next;
    out.iterations = it + 1;
    if (change < opt.tol) {
      out.converged = true;
      break;
    }
  }
  for (Eigen::Index g = 0; g < G; ++g) out.power[static_cast<std::size_t>(g)] = p(g);
  out.peaks = find_peaks(out.power, opt.peak_floor_db, opt.nms_bins);
  return out;
}

/// Steering matrix of a channel layout over a grid of angles.
inline Eigen::MatrixXcd steering_matrix(const SubarrayPlan& plan, const ArrayGeometry& geom,
                                        std::span<const VirtualChannel> channels,
                                        const std::vector<double>& grid_deg) {
  Eigen::MatrixXcd A(static_cast<Eigen::Index>(channels.size()),
                     static_cast<Eigen::Index>(grid_deg.size()));
  for (std::size_t g = 0; g < grid_deg.size(); ++g)
    for (std::size_t c = 0; c < channels.size(); ++c)
      A(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(g)) =
          channel_response(plan, geom, channels[c], deg_to_rad(grid_deg[g]));
  return A;
}

inline AngleSpectrum estimate_angle_spectrum(const VirtualChannelSet& snapshots,
                                             const RadarSetup& setup, const AngleGrid& grid = {},
                                             const AngleOptions& opt = {}) {
  const auto M = static_cast<Eigen::Index>(snapshots.size());
  const auto L = static_cast<Eigen::Index>(snapshots.frames());
  Eigen::MatrixXcd Y(M, L);
  for (Eigen::Index c = 0; c < M; ++c)
    for (Eigen::Index l = 0; l < L; ++l)
      Y(c, l) = snapshots.series[static_cast<std::size_t>(c)][static_cast<std::size_t>(l)];
  const auto deg = grid.angles_deg();
  return estimate_angle_spectrum(Y, steering_matrix(setup.plan, setup.geometry, snapshots.channels,
                                                    deg),
                                 deg, opt);
}

}  // namespace pmv
