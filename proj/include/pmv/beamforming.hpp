#pragma once

// Analog subarray weights, transmit array factor, receive-side digital
// beamforming over the (subarray, rx) virtual channels, and channel extraction
// from a data cube.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "pmv/core/config.hpp"
#include "pmv/core/constants.hpp"
#include "pmv/core/cube.hpp"
#include "pmv/core/error.hpp"
#include "pmv/core/series.hpp"

namespace pmv {

using WeightVector = std::vector<cd>;

enum class ArrayMode { phased_mimo, phased_array };

inline const char* to_string(ArrayMode m) {
  return m == ArrayMode::phased_mimo ? "phased_mimo" : "phased_array";
}

/// Phase-only weights of subarray `p` steered to `theta`:
/// w[l] = s_l exp(-j 2 pi (d_l - d_ref) sin(theta) / lambda), so the reference element is 1.
inline WeightVector subarray_weights(const SubarrayPlan& plan, const ArrayGeometry& geom,
                                     std::size_t p, double theta) {
  if (p >= plan.size()) throw DimensionError("subarray index " + std::to_string(p) + " out of range");
  const double d_ref = geom.tx_positions_m[plan.reference_tx[p]];
  const double s = std::sin(theta) / geom.wavelength_m;
  WeightVector w(geom.num_tx(), cd{});
  for (std::size_t l = 0; l < geom.num_tx(); ++l)
    if (plan.membership[p][l]) w[l] = cis_cycles(-(geom.tx_positions_m[l] - d_ref) * s);
  return w;
}

/// Transmit steering vector a_t[l] = exp(-j 2 pi d_l sin(theta) / lambda).
inline std::vector<cd> tx_steering(const ArrayGeometry& geom, double theta) {
  std::vector<cd> a(geom.num_tx());
  const double s = std::sin(theta) / geom.wavelength_m;
  for (std::size_t l = 0; l < a.size(); ++l) a[l] = cis_cycles(-geom.tx_positions_m[l] * s);
  return a;
}

/// a_t(theta_eval)^H w_p(theta_steer).
inline cd tx_array_factor(const SubarrayPlan& plan, const ArrayGeometry& geom, std::size_t p,
                          double theta_steer, double theta_eval) {
  const auto w = subarray_weights(plan, geom, p, theta_steer);
  const auto a = tx_steering(geom, theta_eval);
  cd sum{};
  for (std::size_t l = 0; l < w.size(); ++l) sum += std::conj(a[l]) * w[l];
  return sum;
}

struct VirtualChannel {
  std::size_t subframe = 0;
  std::size_t subarray = 0;
  std::size_t rx = 0;
  double steer_rad = 0.0;
  double position_m = 0.0;  // d_m + d_p
};

/// Channel layout plus one complex sample per frame per channel.
struct VirtualChannelSet {
  std::vector<VirtualChannel> channels;
  std::vector<std::vector<cd>> series;  // [channel][frame]
  double sample_rate_hz = 20.0;

  std::size_t size() const { return channels.size(); }
  std::size_t frames() const { return series.empty() ? 0 : series.front().size(); }
};

/// Response of one virtual channel to a unit reflector at `theta`, including
/// the analog transmit gain of its subarray.
inline cd channel_response(const SubarrayPlan& plan, const ArrayGeometry& geom,
                           const VirtualChannel& ch, double theta) {
  const double s = std::sin(theta) / geom.wavelength_m;
  return tx_array_factor(plan, geom, ch.subarray, ch.steer_rad, theta) *
         cis_cycles(-geom.rx_positions_m[ch.rx] * s);
}

/// Virtual channels illuminating schedule direction `direction`. Phased-array
/// mode keeps only the first subframe of that direction (M channels).
inline std::vector<VirtualChannel> direction_channels(const RadarSetup& setup,
                                                      std::size_t direction, ArrayMode mode) {
  auto subframes = setup.schedule.subframes_for_direction(direction);
  if (mode == ArrayMode::phased_array) subframes.resize(1);
  std::vector<VirtualChannel> out;
  for (std::size_t sf : subframes) {
    const auto& e = setup.schedule.entries[sf];
    const double d_p = setup.geometry.tx_positions_m[setup.plan.reference_tx[e.subarray]];
    for (std::size_t m = 0; m < setup.geometry.num_rx(); ++m)
      out.push_back({sf, e.subarray, m, e.steer_rad, setup.geometry.rx_positions_m[m] + d_p});
  }
  return out;
}

/// w(p,m) = exp(j 2 pi (d_m - d_p) sin(theta) / lambda), d_p the reference TX of subarray p.
inline WeightVector dbf_weights(const ArrayGeometry& geom, const SubarrayPlan& plan,
                                std::span<const VirtualChannel> channels, double theta) {
  const double s = std::sin(theta) / geom.wavelength_m;
  WeightVector w(channels.size());
  for (std::size_t i = 0; i < channels.size(); ++i) {
    const double d_p = geom.tx_positions_m[plan.reference_tx[channels[i].subarray]];
    w[i] = cis_cycles((geom.rx_positions_m[channels[i].rx] - d_p) * s);
  }
  return w;
}

/// All P x M pairs of a plan, in subarray-major order.
inline std::vector<VirtualChannel> all_channels(const ArrayGeometry& geom, const SubarrayPlan& plan,
                                                double steer_rad = 0.0) {
  std::vector<VirtualChannel> out;
  for (std::size_t p = 0; p < plan.size(); ++p) {
    const double d_p = geom.tx_positions_m[plan.reference_tx[p]];
    for (std::size_t m = 0; m < geom.num_rx(); ++m)
      out.push_back({p, p, m, steer_rad, geom.rx_positions_m[m] + d_p});
  }
  return out;
}

inline cd combine(std::span<const cd> values, std::span<const cd> weights) {
  if (values.size() != weights.size())
    throw DimensionError("combine: " + std::to_string(values.size()) + " channels vs " +
                         std::to_string(weights.size()) + " weights");
  cd sum{};
  for (std::size_t i = 0; i < values.size(); ++i) sum += weights[i] * values[i];
  return sum;
}

/// z[l] = sum_{p,m} w(p,m) y[p,m,l].
inline SlowTimeSeries combine_channels(const VirtualChannelSet& set, const WeightVector& w) {
  if (set.size() != w.size())
    throw DimensionError("combine_channels: " + std::to_string(set.size()) + " channels vs " +
                         std::to_string(w.size()) + " weights");
  SlowTimeSeries out;
  out.sample_rate_hz = set.sample_rate_hz;
  out.samples.assign(set.frames(), cd{});
  for (std::size_t c = 0; c < set.size(); ++c) {
    if (set.series[c].size() != out.samples.size())
      throw DimensionError("combine_channels: ragged channel lengths");
    for (std::size_t l = 0; l < out.samples.size(); ++l) out.samples[l] += w[c] * set.series[c][l];
  }
  return out;
}

/// Twiddles exp(-j 2 pi h k / N) for a single DFT bin.
inline std::vector<cd> bin_kernel(std::size_t h, std::size_t n) {
  std::vector<cd> k(n);
  for (std::size_t i = 0; i < n; ++i)
    k[i] = cis_cycles(-static_cast<double>((h * i) % n) / static_cast<double>(n));
  return k;
}

/// Range-DFT output at bin `h` for every frame of every channel. Chirps within a
/// subframe are summed coherently.
inline VirtualChannelSet extract_virtual_channels(const RadarDataCube& cube,
                                                  const RadarSetup& setup, std::size_t direction,
                                                  std::size_t range_bin,
                                                  ArrayMode mode = ArrayMode::phased_mimo) {
  const auto& d = cube.dims();
  if (d.subframes != setup.schedule.entries.size())
    throw DimensionError("cube has " + std::to_string(d.subframes) + " subframes, schedule has " +
                         std::to_string(setup.schedule.entries.size()));
  if (d.rx != setup.geometry.num_rx())
    throw DimensionError("cube rx count does not match geometry");
  if (range_bin >= d.samples)
    throw DimensionError("range bin " + std::to_string(range_bin) + " >= N_s");
  VirtualChannelSet set;
  set.channels = direction_channels(setup, direction, mode);
  set.sample_rate_hz = setup.chirp.slow_time_rate_hz();
  const auto kernel = bin_kernel(range_bin, d.samples);
  set.series.assign(set.channels.size(), std::vector<cd>(d.frames));
  for (std::size_t c = 0; c < set.channels.size(); ++c) {
    const auto& ch = set.channels[c];
    for (std::uint32_t f = 0; f < d.frames; ++f) {
      cd acc{};
      for (std::uint32_t q = 0; q < d.chirps; ++q) {
        const cf* y = cube.chirp_ptr(f, static_cast<std::uint32_t>(ch.subframe), q,
                                     static_cast<std::uint32_t>(ch.rx));
        for (std::uint32_t k = 0; k < d.samples; ++k) acc += cd(y[k]) * kernel[k];
      }
      set.series[c][f] = acc;
    }
  }
  return set;
}

/// Combined response sum_c w_c(theta_dbf) r_c(theta_eval).
inline cd steered_response(const SubarrayPlan& plan, const ArrayGeometry& geom,
                           std::span<const VirtualChannel> channels, double theta_dbf,
                           double theta_eval) {
  const auto w = dbf_weights(geom, plan, channels, theta_dbf);
  cd sum{};
  for (std::size_t i = 0; i < channels.size(); ++i)
    sum += w[i] * channel_response(plan, geom, channels[i], theta_eval);
  return sum;
}

struct PatternRow {
  double theta_deg = 0.0;
  double tx_db = 0.0;
  double rx_db = 0.0;
  double combined_db = 0.0;
};

/// Magnitude patterns in dB for one steering angle. The TX pattern is that of
/// the first subarray, the RX pattern is the DBF response of the receive array
/// alone, and the combined pattern spans all channels of the direction.
/// With `normalize` each pattern is scaled to 0 dB at its maximum gain
/// (element count) rather than kept in absolute units.
inline std::vector<PatternRow> beam_patterns(const RadarSetup& setup, double steer_rad,
                                             double step_deg = 0.5, bool normalize = false) {
  std::vector<VirtualChannel> channels;
  for (std::size_t p = 0; p < setup.plan.size(); ++p) {
    const double d_p = setup.geometry.tx_positions_m[setup.plan.reference_tx[p]];
    for (std::size_t m = 0; m < setup.geometry.num_rx(); ++m)
      channels.push_back({p, p, m, steer_rad, setup.geometry.rx_positions_m[m] + d_p});
  }
  const double n_tx = static_cast<double>(setup.plan.member_count(0));
  const double n_rx = static_cast<double>(setup.geometry.num_rx());
  double n_all = 0.0;
  for (std::size_t p = 0; p < setup.plan.size(); ++p)
    n_all += static_cast<double>(setup.plan.member_count(p)) * n_rx;
  auto db = [](double mag) { return 20.0 * std::log10(std::max(mag, 1e-12)); };
  const double s_steer = std::sin(steer_rad) / setup.geometry.wavelength_m;

  std::vector<PatternRow> rows;
  const int n = static_cast<int>(std::lround(180.0 / step_deg));
  for (int i = 0; i <= n; ++i) {
    const double deg = -90.0 + i * step_deg;
    const double th = deg_to_rad(deg);
    PatternRow r;
    r.theta_deg = deg;
    double tx = std::abs(tx_array_factor(setup.plan, setup.geometry, 0, steer_rad, th));
    cd rx{};
    const double s = std::sin(th) / setup.geometry.wavelength_m;
    for (double d_m : setup.geometry.rx_positions_m) rx += cis_cycles(d_m * (s_steer - s));
    double comb = std::abs(steered_response(setup.plan, setup.geometry, channels, steer_rad, th));
    double rxm = std::abs(rx);
    if (normalize) {
      tx /= n_tx;
      rxm /= n_rx;
      comb /= n_all;
    }
    r.tx_db = db(tx);
    r.rx_db = db(rxm);
    r.combined_db = db(comb);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace pmv
