#include <gtest/gtest.h>

#include <cmath>

#include "pmv/pipeline.hpp"

using namespace pmv;

namespace {

TargetModel subject(double deg, double range, double br_hz = 0.25, double hr_hz = 1.3) {
  TargetModel t;
  t.angle_rad = deg_to_rad(deg);
  t.nominal_range_m = range;
  t.breathing_amplitude_m = 4e-3;
  t.breathing_rate_hz = br_hz;
  t.heartbeat_amplitude_m = 1e-4;
  t.heartbeat_rate_hz = hr_hz;
  return t;
}

ImpairmentSpec noise(const RadarSetup& s, double snr_db) {
  ImpairmentSpec imp;
  imp.noise_std = noise_std_for_snr(s, snr_db);
  return imp;
}

std::size_t within(const VitalReport& r, bool heart, double truth, double tol) {
  std::size_t n = 0;
  for (const auto& w : r.windows) {
    const auto& v = heart ? w.hr_bpm : w.br_bpm;
    if (v && std::abs(*v - truth) < tol) ++n;
  }
  return n;
}

}  // namespace

TEST(VitalPhase, SingleTargetDefaultScene) {
  const auto setup = default_setup();
  const auto sim = synthesize_cube({subject(30, 1.0)}, setup, noise(setup, 20.0), 120.0, 1);
  PipelineOptions opt;
  opt.truth_targets = {0};
  const auto run = run_vital_phase(sim.cube, {deg_to_rad(30.0)}, setup, opt, nullptr, &sim.truth);
  ASSERT_EQ(run.directions.size(), 1u);
  const auto& d = run.directions[0];
  ASSERT_TRUE(d.ok) << d.failed_stage << ": " << d.error;
  EXPECT_EQ(d.range_bin, 5u);
  EXPECT_GE(d.report.windows.size(), 61u);
  EXPECT_EQ(within(d.report, false, 15.0, 1.0), d.report.windows.size());
  ASSERT_TRUE(d.report.br_metrics && d.report.hr_metrics);
  EXPECT_DOUBLE_EQ(d.report.br_metrics->accuracy, 1.0);
  EXPECT_DOUBLE_EQ(d.report.hr_metrics->accuracy, 1.0);
}

TEST(VitalPhase, StagesLoggedInOrder) {
  const auto setup = default_setup();
  const auto sim = synthesize_cube({subject(30, 1.0)}, setup, {}, 60.0, 1);
  const auto run = run_vital_phase(sim.cube, {deg_to_rad(30.0), deg_to_rad(-30.0)}, setup);
  ASSERT_EQ(run.log.size(), 2 * std::size(kStages));
  for (std::size_t i = 0; i < run.log.size(); ++i) {
    EXPECT_EQ(run.log[i].direction, i / std::size(kStages));
    EXPECT_EQ(run.log[i].stage, kStages[i % std::size(kStages)]);
    EXPECT_TRUE(run.log[i].ok);
  }
}

TEST(VitalPhase, SameRangeTwoTargetsNoCrossAssignment) {
  const auto setup = default_setup();
  const std::vector<TargetModel> scene{subject(30, 1.0, 0.2, 1.1), subject(-30, 1.0, 0.3, 1.5)};
  const auto sim = synthesize_cube(scene, setup, noise(setup, 20.0), 120.0, 2);
  PipelineOptions opt;
  opt.truth_targets = {0, 1};
  const auto run = run_vital_phase(sim.cube, {deg_to_rad(30.0), deg_to_rad(-30.0)}, setup, opt, nullptr, &sim.truth);
  ASSERT_EQ(run.directions.size(), 2u);
  const double br[2] = {12.0, 18.0}, hr[2] = {66.0, 90.0};
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& d = run.directions[i];
    ASSERT_TRUE(d.ok) << d.error;
    EXPECT_EQ(d.range_bin, 5u);
    for (const auto& w : d.report.windows) {
      ASSERT_TRUE(w.br_bpm && w.hr_bpm);
      EXPECT_LT(std::abs(*w.br_bpm - br[i]), std::abs(*w.br_bpm - br[1 - i]));
      EXPECT_LT(std::abs(*w.hr_bpm - hr[i]), std::abs(*w.hr_bpm - hr[1 - i]));
    }
    EXPECT_DOUBLE_EQ(d.report.br_metrics->accuracy, 1.0);
  }
}

TEST(VitalPhase, EmptyDirectionList) {
  const auto setup = default_setup();
  const auto sim = synthesize_cube({}, setup, {}, 1.0, 1);
  const auto run = run_vital_phase(sim.cube, {}, setup);
  EXPECT_TRUE(run.directions.empty());
  ASSERT_EQ(run.diagnostics.size(), 1u);
  EXPECT_EQ(run.diagnostics[0], "no directions requested");
}

TEST(VitalPhase, StageFailureIsolatedToItsDirection) {
  const auto setup = default_setup();
  const auto sim = synthesize_cube({subject(30, 1.0)}, setup, {}, 60.0, 1);
  const auto run = run_vital_phase(sim.cube, {deg_to_rad(30.0), deg_to_rad(10.0)}, setup);
  ASSERT_EQ(run.directions.size(), 2u);
  EXPECT_TRUE(run.directions[0].ok);
  EXPECT_FALSE(run.directions[1].ok);
  EXPECT_EQ(run.directions[1].failed_stage, "extract");

  const auto short_sim = synthesize_cube({subject(30, 1.0)}, setup, {}, 30.0, 1);
  const auto short_run = run_vital_phase(short_sim.cube, {deg_to_rad(30.0)}, setup);
  EXPECT_EQ(short_run.directions[0].failed_stage, "sliding_estimates");
  EXPECT_FALSE(short_run.log.back().ok);
}

TEST(VitalPhase, TruthGridMismatchIsMetricsFailure) {
  const auto setup = default_setup();
  const auto sim = synthesize_cube({subject(30, 1.0)}, setup, {}, 61.0, 1);
  auto truth = sim.truth;
  truth.records.pop_back();
  PipelineOptions opt;
  opt.truth_targets = {0};
  const auto run = run_vital_phase(sim.cube, {deg_to_rad(30.0)}, setup, opt, nullptr, &truth);
  EXPECT_EQ(run.directions[0].failed_stage, "metrics");
}

TEST(VitalPhase, Deterministic) {
  const auto setup = default_setup();
  const auto a = synthesize_cube({subject(30, 1.0), subject(-30, 2.0, 0.3, 1.5)}, setup, noise(setup, 5.0), 70.0, 9);
  SimulationOptions so;
  so.jobs = 3;
  const auto b = synthesize_cube({subject(30, 1.0), subject(-30, 2.0, 0.3, 1.5)}, setup, noise(setup, 5.0), 70.0, 9, so);
  ASSERT_EQ(a.cube.data(), b.cube.data());
  PipelineOptions opt;
  const std::vector<double> dirs{deg_to_rad(30.0), deg_to_rad(-30.0)};
  const auto r1 = run_vital_phase(a.cube, dirs, setup, opt);
  opt.jobs = 2;
  const auto r2 = run_vital_phase(b.cube, dirs, setup, opt);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(r1.directions[i].phase.values, r2.directions[i].phase.values);
    ASSERT_EQ(r1.directions[i].report.windows.size(), r2.directions[i].report.windows.size());
    for (std::size_t w = 0; w < r1.directions[i].report.windows.size(); ++w) {
      EXPECT_EQ(r1.directions[i].report.windows[w].br_bpm, r2.directions[i].report.windows[w].br_bpm);
      EXPECT_EQ(r1.directions[i].report.windows[w].hr_bpm, r2.directions[i].report.windows[w].hr_bpm);
    }
  }
}

TEST(VitalPhase, GratingLobeDirectionIsolated) {
  const auto setup = with_directions(default_setup(), {deg_to_rad(30.0)});
  const auto own = subject(30, 1.0);
  auto intruder = subject(-30, 1.0, 0.45, 1.8);
  intruder.reflection_amplitude = 4.0;
  const auto imp = noise(setup, 20.0);
  const auto alone = synthesize_cube({own}, setup, imp, 90.0, 3);
  const auto both = synthesize_cube({own, intruder}, setup, imp, 90.0, 3);
  const auto ra = run_vital_phase(alone.cube, {own.angle_rad}, setup);
  const auto rb = run_vital_phase(both.cube, {own.angle_rad}, setup);
  ASSERT_TRUE(ra.directions[0].ok && rb.directions[0].ok);
  const auto& wa = ra.directions[0].report.windows;
  const auto& wb = rb.directions[0].report.windows;
  ASSERT_EQ(wa.size(), wb.size());
  for (std::size_t i = 0; i < wa.size(); ++i) {
    ASSERT_TRUE(wa[i].br_bpm && wb[i].br_bpm && wa[i].hr_bpm && wb[i].hr_bpm);
    EXPECT_LT(std::abs(*wa[i].br_bpm - *wb[i].br_bpm), 1.0) << i;
    EXPECT_LT(std::abs(*wa[i].hr_bpm - *wb[i].hr_bpm), 1.0) << i;
  }
}

// A jump landing between the two subarray subframes of a frame makes the
// combined sample dip toward zero, which DACM turns into a large step.
TEST(VitalPhase, DriftCalibrationIsLive) {
  const auto setup = with_directions(default_setup(), {deg_to_rad(30.0)});
  auto imp = noise(setup, 20.0);
  for (std::size_t f = 90; f < 2400; f += 100) imp.drift_events.push_back({f, 3.0, 1});
  const auto sim = synthesize_cube({subject(30, 1.0)}, setup, imp, 120.0, 4);
  PipelineOptions on;
  on.truth_targets = {0};
  auto off = on;
  off.drift_calibration = false;
  const auto a = run_vital_phase(sim.cube, {deg_to_rad(30.0)}, setup, on, nullptr, &sim.truth);
  const auto b = run_vital_phase(sim.cube, {deg_to_rad(30.0)}, setup, off, nullptr, &sim.truth);
  ASSERT_TRUE(a.directions[0].ok && b.directions[0].ok);
  EXPECT_FALSE(a.directions[0].drift_corrections.empty());
  EXPECT_TRUE(b.directions[0].drift_corrections.empty());
  EXPECT_GT(a.directions[0].report.hr_metrics->accuracy, b.directions[0].report.hr_metrics->accuracy);
  EXPECT_LT(a.directions[0].report.hr_metrics->rmse_bpm, b.directions[0].report.hr_metrics->rmse_bpm);
}

TEST(VitalPhase, BackgroundSubtraction) {
  const auto setup = with_directions(default_setup(), {deg_to_rad(30.0)});
  ImpairmentSpec imp = noise(setup, 20.0);
  TargetModel wall;
  wall.angle_rad = deg_to_rad(25.0);
  wall.nominal_range_m = 2.5;
  wall.reflection_amplitude = 6.0;
  imp.background_clutter = {wall};
  const auto bg = synthesize_cube({}, setup, imp, 5.0, 7);
  const auto sim = synthesize_cube({subject(30, 1.0)}, setup, imp, 60.0, 8);
  const auto raw = run_vital_phase(sim.cube, {deg_to_rad(30.0)}, setup);
  const auto clean = run_vital_phase(sim.cube, {deg_to_rad(30.0)}, setup, {}, &bg.cube);
  EXPECT_NE(raw.directions[0].range_bin, 5u);
  EXPECT_EQ(clean.directions[0].range_bin, 5u);
  EXPECT_NEAR(*clean.directions[0].report.windows[0].br_bpm, 15.0, 1.0);
}

TEST(ModeComparison, ChannelCounts) {
  const auto setup = default_setup();
  const auto sim = synthesize_cube({subject(30, 1.0)}, setup, {}, 60.0, 1);
  const auto cmp = run_mode_comparison(sim.cube, {deg_to_rad(30.0)}, setup);
  EXPECT_EQ(cmp.phased_mimo.directions[0].channel_count, 8u);
  EXPECT_EQ(cmp.phased_array.directions[0].channel_count, 4u);
  EXPECT_EQ(cmp.phased_mimo.mode, ArrayMode::phased_mimo);
  EXPECT_EQ(cmp.phased_array.mode, ArrayMode::phased_array);
}

TEST(ModeComparison, NoiselessModesAgree) {
  const auto setup = default_setup();
  const auto sim = synthesize_cube({subject(30, 1.0)}, setup, {}, 70.0, 1);
  const auto cmp = run_mode_comparison(sim.cube, {deg_to_rad(30.0)}, setup);
  const auto& a = cmp.phased_array.directions[0].report.windows;
  const auto& m = cmp.phased_mimo.directions[0].report.windows;
  ASSERT_EQ(a.size(), m.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(*a[i].br_bpm, *m[i].br_bpm, 0.011);
    EXPECT_NEAR(*a[i].hr_bpm, *m[i].hr_bpm, 0.011);
  }
}

TEST(EndToEnd, BreathingRateAtTwentyDecibels) {
  const auto setup = with_directions(default_setup(), {deg_to_rad(-30.0)});
  const auto sim = synthesize_cube({subject(-30, 2.0)}, setup, noise(setup, 20.0), 120.0, 5);
  const auto run = run_vital_phase(sim.cube, {deg_to_rad(-30.0)}, setup);
  const auto& r = run.directions[0].report;
  EXPECT_EQ(r.windows.size(), 61u);
  EXPECT_EQ(within(r, false, 15.0, 1.0), r.windows.size());
}

// Deep breathing drives DACM steps past 1 rad at 20 Hz, where its small-angle
// compression creates breathing harmonics inside the heart band; at 50 Hz the
// steps stay small enough.
TEST(EndToEnd, DeepBreathingHeartRateAtFiftyHertz) {
  auto setup = with_directions(default_setup(), {0.0});
  setup.chirp.frame_period_s = 20e-3;
  setup.chirp.subframe_period_s = 10e-3;
  auto t = subject(0, 1.0);
  t.breathing_amplitude_m = 12e-3;
  const auto sim = synthesize_cube({t}, setup, noise(setup, 20.0), 120.0, 6);
  PipelineOptions opt;
  opt.drift_calibration = false;
  const auto run = run_vital_phase(sim.cube, {0.0}, setup, opt);
  const auto& r = run.directions[0].report;
  ASSERT_EQ(r.windows.size(), 61u);
  EXPECT_EQ(within(r, true, 78.0, 3.0), r.windows.size());
  EXPECT_EQ(within(r, false, 15.0, 1.0), r.windows.size());
}

TEST(Detection, ScheduleMatching) {
  const auto s = default_setup();
  EXPECT_EQ(match_schedule_direction(s.schedule, deg_to_rad(29.5), deg_to_rad(1.0)), 0u);
  EXPECT_EQ(match_schedule_direction(s.schedule, deg_to_rad(-30.4), deg_to_rad(1.0)), 1u);
  EXPECT_FALSE(match_schedule_direction(s.schedule, deg_to_rad(0.0), deg_to_rad(1.0)).has_value());
}

TEST(Detection, TwoSubjectsFound) {
  const auto mimo = tdm_mimo_setup(default_setup());
  const std::vector<TargetModel> scene{subject(-30, 1.6, 0.2, 1.1), subject(30, 1.6, 0.3, 1.5)};
  const auto det_sim = synthesize_cube(scene, mimo, noise(mimo, 20.0), 1.0, 1);
  const auto det = run_detection_phase(det_sim.cube, mimo);
  ASSERT_EQ(det.angles_deg.size(), 2u);
  EXPECT_NEAR(det.angles_deg[0], -30.0, 1.0);
  EXPECT_NEAR(det.angles_deg[1], 30.0, 1.0);
}
