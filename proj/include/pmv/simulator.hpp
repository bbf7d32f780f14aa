#pragma once

// Synthetic beat-signal cubes for breathing/heartbeating reflectors seen by a
// TDM phased-MIMO array, plus matching ground truth.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "pmv/beamforming.hpp"
#include "pmv/core/config.hpp"
#include "pmv/core/constants.hpp"
#include "pmv/core/cube.hpp"
#include "pmv/core/error.hpp"
#include "pmv/core/series.hpp"

namespace pmv {

struct TargetModel {
  double angle_rad = 0.0;
  double nominal_range_m = 1.0;
  double breathing_amplitude_m = 0.0;
  double breathing_rate_hz = 0.25;
  double heartbeat_amplitude_m = 0.0;
  double heartbeat_rate_hz = 1.3;
  double reflection_amplitude = 1.0;
  double breathing_phase_rad = 0.0;
  double heartbeat_phase_rad = 0.0;
  // Breathing harmonics at 2x and 3x, amplitudes relative to the fundamental.
  double harmonic2 = 0.0;
  double harmonic3 = 0.0;

  bool physiological() const {
    return breathing_rate_hz >= 0.1 && breathing_rate_hz <= 0.5 && heartbeat_rate_hz >= 0.8 &&
           heartbeat_rate_hz <= 2.0;
  }
};

/// Displacement of the chest about its nominal range, R1(t).
inline double chest_offset(const TargetModel& t, double time_s) {
  const double wb = kTwoPi * t.breathing_rate_hz * time_s + t.breathing_phase_rad;
  double r = t.breathing_amplitude_m * std::sin(wb);
  if (t.harmonic2 != 0.0) r += t.harmonic2 * t.breathing_amplitude_m * std::sin(2.0 * wb);
  if (t.harmonic3 != 0.0) r += t.harmonic3 * t.breathing_amplitude_m * std::sin(3.0 * wb);
  r += t.heartbeat_amplitude_m *
       std::sin(kTwoPi * t.heartbeat_rate_hz * time_s + t.heartbeat_phase_rad);
  return r;
}

/// R(t) = R0 + b sin(2 pi f_b t) + h sin(2 pi f_h t).
inline double chest_displacement(const TargetModel& t, double time_s) {
  return t.nominal_range_m + chest_offset(t, time_s);
}

struct DriftEvent {
  std::size_t frame = 0;
  double jump_rad = 0.0;
  std::size_t subframe = 0;  // first affected subframe within `frame`
};

struct ImpairmentSpec {
  double noise_std = 0.0;
  cd dc_offset{};  // relative to each reflector's unit-circle trajectory
  std::vector<DriftEvent> drift_events;
  std::vector<TargetModel> background_clutter;

  void validate() const {
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std))
      throw ValidationError("noise_std", "noise_std must be finite and >= 0");
    for (const auto& e : drift_events)
      if (!std::isfinite(e.jump_rad)) throw ValidationError("finite", "drift jump not finite");
  }
};

struct TruthRecord {
  double window_start_s = 0.0;
  std::size_t target_id = 0;
  double br_bpm = 0.0;
  double hr_bpm = 0.0;
};

struct GroundTruth {
  std::vector<TruthRecord> records;
  std::vector<std::vector<double>> displacement_m;  // [target][frame], R1 at frame start
  double sample_rate_hz = 20.0;
  WindowSpec window;
};

struct SimulationOptions {
  double start_time_s = 0.0;  // absolute time of frame 0
  unsigned jobs = 1;
  WindowSpec window;
};

struct SimulationResult {
  RadarDataCube cube;
  GroundTruth truth;
};

/// Noise std that yields `snr_db` per virtual channel after the range DFT, for a
/// unit reflector seen through a fully steered subarray.
inline double noise_std_for_snr(const RadarSetup& setup, double snr_db) {
  std::size_t n_sub = 1;
  for (std::size_t p = 0; p < setup.plan.size(); ++p)
    n_sub = std::max(n_sub, setup.plan.member_count(p));
  const double coherent = static_cast<double>(setup.chirp.num_adc_samples) *
                          setup.chirp.chirps_per_subframe;
  return static_cast<double>(n_sub) * std::sqrt(coherent) * std::pow(10.0, -snr_db / 20.0);
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t frame_seed(std::uint64_t seed, std::size_t frame) {
  return splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(frame));
}

template <typename Fn>
void parallel_for(std::size_t n, unsigned jobs, Fn&& fn) {
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  for (unsigned j = 0; j < jobs; ++j)
    pool.emplace_back([&, j] {
      for (std::size_t i = j; i < n; i += jobs) fn(i);
    });
  for (auto& t : pool) t.join();
}

}  // namespace detail

inline std::size_t frames_for_duration(const ChirpConfig& c, double duration_s) {
  return static_cast<std::size_t>(std::floor(duration_s / c.frame_period_s + 1e-9));
}

inline GroundTruth make_ground_truth(const std::vector<TargetModel>& targets,
                                     const ChirpConfig& c, std::size_t frames,
                                     const SimulationOptions& opt) {
  GroundTruth gt;
  gt.sample_rate_hz = c.slow_time_rate_hz();
  gt.window = opt.window;
  const std::size_t n_win = opt.window.count(frames, gt.sample_rate_hz);
  const std::size_t step = opt.window.step_samples(gt.sample_rate_hz);
  for (std::size_t w = 0; w < n_win; ++w)
    for (std::size_t i = 0; i < targets.size(); ++i)
      gt.records.push_back({static_cast<double>(w * step) / gt.sample_rate_hz, i,
                            60.0 * targets[i].breathing_rate_hz,
                            60.0 * targets[i].heartbeat_rate_hz});
  for (const auto& t : targets) {
    std::vector<double> d(frames);
    for (std::size_t l = 0; l < frames; ++l)
      d[l] = chest_offset(t, opt.start_time_s + static_cast<double>(l) * c.frame_period_s);
    gt.displacement_m.push_back(std::move(d));
  }
  return gt;
}

/// Beat samples sum_targets A G_p(theta) exp(j 2 pi [f_b k T_f + 2 f_c R / c - d_m sin(theta) / lambda])
/// plus complex Gaussian noise. G_p carries the reference-element phase of the
/// steered subarray, so the channel phase is (d_p - d_m) sin(theta) / lambda.
/// Displacement is frozen at each chirp's ADC start.
inline SimulationResult synthesize_cube(const std::vector<TargetModel>& targets,
                                        const RadarSetup& setup, const ImpairmentSpec& imp,
                                        double duration_s, std::uint64_t seed,
                                        const SimulationOptions& opt = {}) {
  setup.validate();
  imp.validate();
  const ChirpConfig& c = setup.chirp;
  if (!(duration_s >= c.frame_period_s * (1.0 - 1e-9)))
    throw ValidationError("duration", "duration_s shorter than one frame (" +
                                          detail::format_double(c.frame_period_s) + " s)");
  const std::size_t frames = frames_for_duration(c, duration_s);
  if (setup.schedule.entries.size() != c.subframes_per_frame)
    throw DimensionError("schedule length does not match subframes_per_frame");

  std::vector<TargetModel> scene = targets;
  scene.insert(scene.end(), imp.background_clutter.begin(), imp.background_clutter.end());

  const CubeDims dims{static_cast<std::uint32_t>(frames), c.subframes_per_frame,
                      c.chirps_per_subframe, static_cast<std::uint32_t>(setup.geometry.num_rx()),
                      c.num_adc_samples};
  RadarDataCube cube(dims);

  const std::size_t S = dims.subframes, M = dims.rx, N = dims.samples;
  const double lambda = setup.geometry.wavelength_m;
  const double Tf = c.adc_sample_interval_s();

  // Per (subframe, target): transmit gain times amplitude; per (rx, target): receive phase.
  std::vector<cd> gain(S * scene.size());
  for (std::size_t s = 0; s < S; ++s) {
    const auto& e = setup.schedule.entries[s];
    for (std::size_t i = 0; i < scene.size(); ++i)
      gain[s * scene.size() + i] =
          scene[i].reflection_amplitude *
          tx_array_factor(setup.plan, setup.geometry, e.subarray, e.steer_rad, scene[i].angle_rad);
  }
  std::vector<cd> rx_phase(M * scene.size());
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t i = 0; i < scene.size(); ++i)
      rx_phase[m * scene.size() + i] =
          cis_cycles(-setup.geometry.rx_positions_m[m] * std::sin(scene[i].angle_rad) / lambda);

  auto drift_at = [&](std::size_t l, std::size_t s) {
    double total = 0.0;
    for (const auto& ev : imp.drift_events)
      if (l > ev.frame || (l == ev.frame && s >= ev.subframe)) total += ev.jump_rad;
    return total;
  };

  auto render_frame = [&](std::size_t l) {
    std::vector<cd> tone(N);
    for (std::size_t s = 0; s < S; ++s) {
      const cd drift = std::polar(1.0, drift_at(l, s));
      for (std::uint32_t q = 0; q < dims.chirps; ++q) {
        const double t = opt.start_time_s + static_cast<double>(l) * c.frame_period_s +
                         static_cast<double>(s) * c.subframe_period_s +
                         static_cast<double>(q) * c.chirp_period_s() + c.tx_start_time_s +
                         c.adc_start_time_s;
        for (std::size_t m = 0; m < M; ++m) {
          cf* y = cube.chirp_ptr(static_cast<std::uint32_t>(l), static_cast<std::uint32_t>(s), q,
                                 static_cast<std::uint32_t>(m));
          std::fill(tone.begin(), tone.end(), cd{});
          for (std::size_t i = 0; i < scene.size(); ++i) {
            const double R = chest_displacement(scene[i], t);
            const double fb = c.beat_frequency_hz(R);
            const cd carrier = cis_cycles(2.0 * c.start_frequency_hz * R / kSpeedOfLight) +
                               imp.dc_offset;
            cd z = gain[s * scene.size() + i] * rx_phase[m * scene.size() + i] * carrier * drift;
            const cd step = cis_cycles(fb * Tf);
            for (std::size_t k = 0; k < N; ++k) {
              tone[k] += z;
              z *= step;
            }
          }
          for (std::size_t k = 0; k < N; ++k) y[k] = cf(tone[k]);
        }
      }
    }
    if (imp.noise_std > 0.0) {
      std::mt19937_64 rng(detail::frame_seed(seed, l));
      std::normal_distribution<double> gauss(0.0, imp.noise_std / std::sqrt(2.0));
      const std::size_t per_frame = S * dims.chirps * M * N;
      cf* y = cube.data().data() + cube.offset(static_cast<std::uint32_t>(l), 0, 0, 0, 0);
      for (std::size_t i = 0; i < per_frame; ++i) {
        const double re = gauss(rng);
        const double im = gauss(rng);
        y[i] = cf(static_cast<float>(y[i].real() + re), static_cast<float>(y[i].imag() + im));
      }
    }
  };
  detail::parallel_for(frames, opt.jobs, render_frame);

  cube.provenance.seed = seed;
  SimulationResult out{std::move(cube), make_ground_truth(targets, c, frames, opt)};
  return out;
}

}  // namespace pmv
