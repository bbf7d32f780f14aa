#pragma once

// End-to-end processing: TDM-MIMO detection followed by per-direction
// extraction, combination, phase recovery and vital-sign estimation.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "pmv/beamforming.hpp"
#include "pmv/core/config.hpp"
#include "pmv/core/cube.hpp"
#include "pmv/core/error.hpp"
#include "pmv/core/fft.hpp"
#include "pmv/core/series.hpp"
#include "pmv/detection.hpp"
#include "pmv/phase.hpp"
#include "pmv/simulator.hpp"
#include "pmv/vitals.hpp"

namespace pmv {

inline constexpr const char* kStages[] = {
    "extract",     "combine", "range_profile",   "background",   "select_bin",        "dc_correct",
    "dacm",        "drift_calibrate", "band_filter", "sliding_estimates", "metrics"};

// ---------------------------------------------------------------------------
// Detection
// ---------------------------------------------------------------------------

struct DetectionOptions {
  std::size_t frames = 60;  // snapshots fed to the angle estimator (3 s at 20 Hz)
  AngleGrid grid;
  AngleOptions angle;
  std::size_t max_directions = 2;
  std::size_t bin_lo = 1;
  std::size_t bin_hi = 0;          // 0 selects N_s / 2
  double min_bin_snr_db = 3.0;     // candidate bin power over the profile median
  double candidate_floor_db = 10.0;
  std::size_t max_candidate_bins = 2;
  double merge_deg = 4.0;
  bool motion_compensation = true;  // undo inter-subframe phase progression
};

struct DetectionResult {
  std::vector<double> angles_deg;  // ascending
  std::vector<std::size_t> candidate_bins;
  std::vector<AngleSpectrum> spectra;  // one per candidate bin
  std::vector<double> profile_power;   // non-coherent range profile
};

/// Per-channel range spectra, chirps summed: [channel][frame][bin].
inline std::vector<std::vector<std::vector<cd>>> channel_range_spectra(
    const RadarDataCube& cube, std::span<const VirtualChannel> channels, std::size_t frames) {
  const auto& d = cube.dims();
  std::vector<std::vector<std::vector<cd>>> out(channels.size());
  std::vector<cd> beat(d.samples);
  for (std::size_t c = 0; c < channels.size(); ++c) {
    out[c].resize(frames);
    for (std::size_t l = 0; l < frames; ++l) {
      std::fill(beat.begin(), beat.end(), cd{});
      for (std::uint32_t q = 0; q < d.chirps; ++q) {
        const cf* y = cube.chirp_ptr(static_cast<std::uint32_t>(l),
                                     static_cast<std::uint32_t>(channels[c].subframe), q,
                                     static_cast<std::uint32_t>(channels[c].rx));
        for (std::uint32_t k = 0; k < d.samples; ++k) beat[k] += cd(y[k]);
      }
      out[c][l] = fft_forward(beat);
    }
  }
  return out;
}

/// Removes the phase a moving reflector accumulates between TDM subframes of
/// one frame. The per-frame phase rate comes from the channel-summed
/// frame-to-frame rotation of the bin; channel c is de-rotated by the
/// fraction of a frame its subframe lags subframe 0.
inline void compensate_subframe_motion(Eigen::MatrixXcd& Y, std::span<const VirtualChannel> channels,
                                       const ChirpConfig& chirp) {
  const Eigen::Index L = Y.cols();
  if (L < 2) return;
  std::vector<double> rate(static_cast<std::size_t>(L));
  auto step = [&](Eigen::Index a, Eigen::Index b) {
    return std::arg((Y.col(b).array() * Y.col(a).conjugate().array()).sum());
  };
  for (Eigen::Index l = 0; l < L; ++l) {
    double r;
    if (l == 0) r = step(0, 1);
    else if (l == L - 1) r = step(L - 2, L - 1);
    else r = 0.5 * (step(l - 1, l) + step(l, l + 1));
    rate[static_cast<std::size_t>(l)] = r;
  }
  for (std::size_t c = 0; c < channels.size(); ++c) {
    const double frac = static_cast<double>(channels[c].subframe) * chirp.subframe_period_s /
                        chirp.frame_period_s;
    if (frac == 0.0) continue;
    for (Eigen::Index l = 0; l < L; ++l)
      Y(static_cast<Eigen::Index>(c), l) *= std::polar(1.0, -rate[static_cast<std::size_t>(l)] * frac);
  }
}

/// Channels of a detection recording: every subframe paired with every RX.
inline std::vector<VirtualChannel> detection_channels(const RadarSetup& setup) {
  std::vector<VirtualChannel> out;
  for (std::size_t s = 0; s < setup.schedule.entries.size(); ++s) {
    const auto& e = setup.schedule.entries[s];
    const double d_p = setup.geometry.tx_positions_m[setup.plan.reference_tx[e.subarray]];
    for (std::size_t m = 0; m < setup.geometry.num_rx(); ++m)
      out.push_back({s, e.subarray, m, e.steer_rad, setup.geometry.rx_positions_m[m] + d_p});
  }
  return out;
}

/// Angles of the subjects seen in a TDM-MIMO recording. `background`, when
/// given, is a target-free recording with the same layout.
inline DetectionResult run_detection_phase(const RadarDataCube& cube, const RadarSetup& setup,
                                           const DetectionOptions& opt = {},
                                           const RadarDataCube* background = nullptr) {
  DetectionResult res;
  const auto& d = cube.dims();
  if (d.subframes != setup.schedule.entries.size() || d.rx != setup.geometry.num_rx())
    throw DimensionError("detection cube layout does not match its setup");
  const std::size_t frames = std::min<std::size_t>(opt.frames, d.frames);
  if (frames < 8) throw DimensionError("detection needs at least 8 frames");
  const auto channels = detection_channels(setup);
  auto spectra = channel_range_spectra(cube, channels, frames);
  const std::size_t N = d.samples;

  if (background) {
    const std::size_t bf = background->dims().frames;
    if (background->dims().subframes != d.subframes || background->dims().rx != d.rx ||
        background->dims().samples != d.samples || bf == 0)
      throw DimensionError("background recording layout differs from detection recording");
    const auto bg = channel_range_spectra(*background, channels, bf);
    for (std::size_t c = 0; c < channels.size(); ++c) {
      std::vector<cd> mean(N, cd{});
      for (std::size_t l = 0; l < bf; ++l)
        for (std::size_t h = 0; h < N; ++h) mean[h] += bg[c][l][h];
      for (auto& v : mean) v /= static_cast<double>(bf);
      for (std::size_t l = 0; l < frames; ++l)
        for (std::size_t h = 0; h < N; ++h) spectra[c][l][h] -= mean[h];
    }
  }

  res.profile_power.assign(N, 0.0);
  for (const auto& ch : spectra)
    for (const auto& fr : ch)
      for (std::size_t h = 0; h < N; ++h) res.profile_power[h] += std::norm(fr[h]);

  const std::size_t lo = opt.bin_lo;
  const std::size_t hi = opt.bin_hi ? std::min(opt.bin_hi, N) : N / 2;
  if (lo >= hi) throw DimensionError("empty range-bin search interval");
  std::vector<double> in_range(res.profile_power.begin() + static_cast<std::ptrdiff_t>(lo),
                               res.profile_power.begin() + static_cast<std::ptrdiff_t>(hi));
  const double mx = *std::max_element(in_range.begin(), in_range.end());
  if (!(mx > 0.0)) return res;
  std::vector<double> sorted = in_range;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2),
                   sorted.end());
  const double median = sorted[sorted.size() / 2];
  const double floor_abs = median * std::pow(10.0, opt.min_bin_snr_db / 10.0);
  const double floor_rel = mx * std::pow(10.0, -opt.candidate_floor_db / 10.0);

  std::vector<std::size_t> cands;
  for (std::size_t h = lo; h < hi; ++h) {
    const double p = res.profile_power[h];
    const bool left = h == 0 || p > res.profile_power[h - 1];
    const bool right = h + 1 >= N || p >= res.profile_power[h + 1];
    if (left && right && p > floor_abs && p >= floor_rel) cands.push_back(h);
  }
  std::stable_sort(cands.begin(), cands.end(), [&](std::size_t a, std::size_t b) {
    return res.profile_power[a] > res.profile_power[b];
  });
  if (cands.size() > opt.max_candidate_bins) cands.resize(opt.max_candidate_bins);
  res.candidate_bins = cands;

  struct Hit {
    double angle_deg;
    double power;
  };
  std::vector<Hit> hits;
  const auto grid = opt.grid.angles_deg();
  const auto A = steering_matrix(setup.plan, setup.geometry, channels, grid);
  for (std::size_t h : cands) {
    Eigen::MatrixXcd Y(static_cast<Eigen::Index>(channels.size()),
                       static_cast<Eigen::Index>(frames));
    for (std::size_t c = 0; c < channels.size(); ++c)
      for (std::size_t l = 0; l < frames; ++l)
        Y(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(l)) = spectra[c][l][h];
    if (opt.motion_compensation) compensate_subframe_motion(Y, channels, setup.chirp);
    auto spec = estimate_angle_spectrum(Y, A, grid, opt.angle);
    for (auto g : spec.peaks) hits.push_back({spec.theta_deg[g], spec.power[g]});
    res.spectra.push_back(std::move(spec));
  }
  std::stable_sort(hits.begin(), hits.end(),
                   [](const Hit& a, const Hit& b) { return a.power > b.power; });
  for (const auto& hit : hits) {
    if (res.angles_deg.size() >= opt.max_directions) break;
    bool dup = false;
    for (double a : res.angles_deg)
      if (std::abs(a - hit.angle_deg) < opt.merge_deg) dup = true;
    if (!dup) res.angles_deg.push_back(hit.angle_deg);
  }
  std::sort(res.angles_deg.begin(), res.angles_deg.end());
  return res;
}

// ---------------------------------------------------------------------------
// Vital phase
// ---------------------------------------------------------------------------

struct PipelineOptions {
  ArrayMode mode = ArrayMode::phased_mimo;
  bool dc_correction = true;
  bool geometric_refine = false;
  bool drift_calibration = true;
  double drift_threshold_rad = 1.5;
  std::size_t bin_lo = 1;
  std::size_t bin_hi = 0;  // 0 selects N_s / 2
  VitalOptions vitals;
  unsigned jobs = 1;
  /// Ground-truth target per direction, used for metrics when truth is supplied.
  std::vector<std::optional<std::size_t>> truth_targets;
};

struct StageRecord {
  std::size_t direction = 0;
  std::string stage;
  bool ok = true;
  std::string message;
};

struct DirectionArtifacts {
  std::size_t direction = 0;
  double angle_rad = 0.0;
  std::size_t channel_count = 0;
  std::size_t range_bin = 0;
  std::vector<double> range_profile_db;  // mean combined magnitude per bin
  SlowTimeSeries series;
  std::optional<CircleFit> circle;
  PhaseSeries phase;
  std::vector<std::size_t> drift_corrections;
  VitalReport report;
  bool ok = false;
  std::string failed_stage;
  std::string error;
};

struct PipelineRun {
  ArrayMode mode = ArrayMode::phased_mimo;
  std::vector<DirectionArtifacts> directions;
  std::vector<StageRecord> log;  // ordered by (direction, stage)
  std::vector<std::string> diagnostics;
};

/// Index of the schedule direction closest to `angle_rad`, if within `tol_rad`.
inline std::optional<std::size_t> match_schedule_direction(const TdmSchedule& sched,
                                                           double angle_rad, double tol_rad) {
  const auto dirs = sched.directions();
  std::optional<std::size_t> best;
  double best_err = tol_rad;
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    const double e = std::abs(dirs[i] - angle_rad);
    if (e <= best_err) {
      best_err = e;
      best = i;
    }
  }
  return best;
}

/// Mean over frames of the combined complex range spectrum for one direction.
inline std::vector<cd> mean_combined_spectrum(const RadarDataCube& cube,
                                              std::span<const VirtualChannel> channels,
                                              const WeightVector& w) {
  const auto& d = cube.dims();
  std::vector<cd> mean(d.samples, cd{});
  std::vector<cd> beat(d.samples);
  for (std::uint32_t l = 0; l < d.frames; ++l) {
    std::fill(beat.begin(), beat.end(), cd{});
    for (std::size_t c = 0; c < channels.size(); ++c)
      for (std::uint32_t q = 0; q < d.chirps; ++q) {
        const cf* y = cube.chirp_ptr(l, static_cast<std::uint32_t>(channels[c].subframe), q,
                                     static_cast<std::uint32_t>(channels[c].rx));
        for (std::uint32_t k = 0; k < d.samples; ++k) beat[k] += w[c] * cd(y[k]);
      }
    const auto spec = fft_forward(beat);
    for (std::size_t h = 0; h < spec.size(); ++h) mean[h] += spec[h];
  }
  if (d.frames) for (auto& v : mean) v /= static_cast<double>(d.frames);
  return mean;
}

namespace detail {

inline DirectionArtifacts process_direction(const RadarDataCube& cube, const RadarSetup& setup,
                                            std::size_t schedule_dir, double angle_rad,
                                            const PipelineOptions& opt,
                                            const RadarDataCube* background,
                                            const GroundTruth* truth,
                                            std::optional<std::size_t> truth_target,
                                            std::vector<StageRecord>& log) {
  DirectionArtifacts art;
  art.angle_rad = angle_rad;
  const auto& d = cube.dims();
  const double fs = setup.chirp.slow_time_rate_hz();
  std::string stage;
  auto begin = [&](const char* s) { stage = s; };
  auto done = [&](std::string msg = {}) { log.push_back({art.direction, stage, true, std::move(msg)}); };

  try {
    begin("extract");
    if (d.subframes != setup.schedule.entries.size() || d.rx != setup.geometry.num_rx() ||
        d.samples != setup.chirp.num_adc_samples)
      throw DimensionError("cube layout does not match configuration");
    const auto channels = direction_channels(setup, schedule_dir, opt.mode);
    art.channel_count = channels.size();
    done(std::to_string(channels.size()) + " channels");

    begin("combine");
    const auto w = dbf_weights(setup.geometry, setup.plan, channels, angle_rad);
    std::vector<std::vector<cd>> beats(d.frames, std::vector<cd>(d.samples, cd{}));
    for (std::uint32_t l = 0; l < d.frames; ++l)
      for (std::size_t c = 0; c < channels.size(); ++c)
        for (std::uint32_t q = 0; q < d.chirps; ++q) {
          const cf* y = cube.chirp_ptr(l, static_cast<std::uint32_t>(channels[c].subframe), q,
                                       static_cast<std::uint32_t>(channels[c].rx));
          auto& b = beats[l];
          for (std::uint32_t k = 0; k < d.samples; ++k) b[k] += w[c] * cd(y[k]);
        }
    done();

    begin("range_profile");
    std::vector<std::vector<cd>> spectra(d.frames);
    for (std::uint32_t l = 0; l < d.frames; ++l) spectra[l] = fft_forward(beats[l]);
    beats.clear();
    beats.shrink_to_fit();
    done();

    begin("background");
    std::vector<cd> bg(d.samples, cd{});
    if (background) {
      const auto& bd = background->dims();
      if (bd.subframes != d.subframes || bd.rx != d.rx || bd.samples != d.samples ||
          bd.chirps != d.chirps || bd.frames == 0)
        throw DimensionError("background cube layout differs from the recording");
      bg = mean_combined_spectrum(*background, channels, w);
      for (auto& s : spectra)
        for (std::size_t h = 0; h < s.size(); ++h) s[h] -= bg[h];
    }
    done(background ? "subtracted" : "none");

    begin("select_bin");
    std::vector<double> mag(d.samples, 0.0);
    for (const auto& s : spectra)
      for (std::size_t h = 0; h < s.size(); ++h) mag[h] += std::abs(s[h]);
    for (auto& m : mag) m /= std::max<double>(1.0, d.frames);
    art.range_profile_db.resize(mag.size());
    for (std::size_t h = 0; h < mag.size(); ++h)
      art.range_profile_db[h] = 20.0 * std::log10(std::max(mag[h], 1e-12));
    const std::size_t hi = opt.bin_hi ? std::min<std::size_t>(opt.bin_hi, d.samples) : d.samples / 2;
    art.range_bin = select_range_bin(mag, opt.bin_lo, hi);
    art.series.direction = art.direction;
    art.series.range_bin = art.range_bin;
    art.series.sample_rate_hz = fs;
    art.series.samples.resize(d.frames);
    for (std::uint32_t l = 0; l < d.frames; ++l) art.series.samples[l] = spectra[l][art.range_bin];
    spectra.clear();
    done("bin " + std::to_string(art.range_bin));

    begin("dc_correct");
    SlowTimeSeries centered = art.series;
    if (opt.dc_correction) {
      auto [out, fit] = dc_offset_correct(art.series, opt.geometric_refine);
      centered = std::move(out);
      art.circle = fit;
    }
    done();

    begin("dacm");
    std::vector<std::size_t> flagged;
    art.phase = dacm_phase(centered, &flagged);
    done(flagged.empty() ? "" : std::to_string(flagged.size()) + " zero samples");

    begin("drift_calibrate");
    if (opt.drift_calibration)
      art.phase = drift_calibrate(art.phase, opt.drift_threshold_rad, &art.drift_corrections);
    done(std::to_string(art.drift_corrections.size()) + " corrections");

    begin("band_filter");
    opt.vitals.br_band.validate(fs);
    opt.vitals.hr_band.validate(fs);
    done();

    begin("sliding_estimates");
    art.report = sliding_estimates(art.phase, opt.vitals);
    art.report.target_id = truth_target.value_or(art.direction);
    done(std::to_string(art.report.windows.size()) + " windows");

    begin("metrics");
    if (truth && truth_target) {
      std::vector<std::optional<double>> br, hr;
      std::vector<double> tbr, thr;
      std::vector<const TruthRecord*> rows;
      for (const auto& r : truth->records)
        if (r.target_id == *truth_target) rows.push_back(&r);
      if (rows.size() != art.report.windows.size())
        throw EvaluationError("window grid mismatch: " +
                              std::to_string(art.report.windows.size()) + " estimates vs " +
                              std::to_string(rows.size()) + " truth windows");
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (std::abs(rows[i]->window_start_s - art.report.windows[i].window_start_s) > 1e-6)
          throw EvaluationError("window grid mismatch at window " + std::to_string(i));
        br.push_back(art.report.windows[i].br_bpm);
        hr.push_back(art.report.windows[i].hr_bpm);
        tbr.push_back(rows[i]->br_bpm);
        thr.push_back(rows[i]->hr_bpm);
      }
      art.report.br_metrics = compute_metrics(br, tbr);
      art.report.hr_metrics = compute_metrics(hr, thr);
      done();
    } else {
      done("no truth");
    }
    art.ok = true;
  } catch (const std::exception& e) {
    art.failed_stage = stage;
    art.error = e.what();
    log.push_back({art.direction, stage, false, e.what()});
  }
  return art;
}

}  // namespace detail

/// Runs the per-direction chain for each requested angle. Angles are matched
/// to schedule directions; a stage failure is recorded and the remaining
/// directions still run.
inline PipelineRun run_vital_phase(const RadarDataCube& cube, const std::vector<double>& angles_rad,
                                   const RadarSetup& setup, const PipelineOptions& opt = {},
                                   const RadarDataCube* background = nullptr,
                                   const GroundTruth* truth = nullptr) {
  PipelineRun run;
  run.mode = opt.mode;
  if (angles_rad.empty()) {
    run.diagnostics.push_back("no directions requested");
    return run;
  }
  const std::size_t n = angles_rad.size();
  run.directions.resize(n);
  std::vector<std::vector<StageRecord>> logs(n);
  auto work = [&](std::size_t i) {
    const auto sd = match_schedule_direction(setup.schedule, angles_rad[i], deg_to_rad(1.0));
    std::optional<std::size_t> target;
    if (i < opt.truth_targets.size()) target = opt.truth_targets[i];
    if (!sd) {
      DirectionArtifacts art;
      art.direction = i;
      art.angle_rad = angles_rad[i];
      art.failed_stage = "extract";
      art.error = "direction " + detail::format_double(rad_to_deg(angles_rad[i])) +
                  " deg absent from schedule";
      logs[i].push_back({i, "extract", false, art.error});
      run.directions[i] = std::move(art);
      return;
    }
    std::vector<StageRecord> local;
    auto art = detail::process_direction(cube, setup, *sd, angles_rad[i], opt, background, truth,
                                         target, local);
    art.direction = i;
    art.series.direction = i;
    for (auto& r : local) r.direction = i;
    if (art.ok) art.report.target_id = target.value_or(i);
    logs[i] = std::move(local);
    run.directions[i] = std::move(art);
  };
  detail::parallel_for(n, opt.jobs, work);
  for (auto& l : logs) run.log.insert(run.log.end(), l.begin(), l.end());
  return run;
}

struct ModeComparison {
  PipelineRun phased_array;
  PipelineRun phased_mimo;
};

/// The same scene processed with one subarray per direction and with the full
/// set of subarrays.
inline ModeComparison run_mode_comparison(const RadarDataCube& cube,
                                          const std::vector<double>& angles_rad,
                                          const RadarSetup& setup, PipelineOptions opt = {},
                                          const RadarDataCube* background = nullptr,
                                          const GroundTruth* truth = nullptr) {
  ModeComparison out;
  opt.mode = ArrayMode::phased_array;
  out.phased_array = run_vital_phase(cube, angles_rad, setup, opt, background, truth);
  opt.mode = ArrayMode::phased_mimo;
  out.phased_mimo = run_vital_phase(cube, angles_rad, setup, opt, background, truth);
  return out;
}

}  // namespace pmv
