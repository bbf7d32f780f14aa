// pmv: simulate, process, sweep, evaluate, pattern and plot.
//
// Exit codes: 0 ok, 1 unexpected failure, 2 configuration or input error,
// 3 pipeline stage failure, 4 evaluation error.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "pmv/app/commands.hpp"

namespace {

using pmv::fs::path;

template <class T>
std::optional<T> opt_if(const CLI::Option* o, const T& v) {
  return o->count() ? std::optional<T>(v) : std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace pmv::app;
  CLI::App app{"Phased-MIMO radar vital-sign toolkit"};
  app.require_subcommand(1);

  // simulate
  SimulateOptions sim;
  std::string sim_config, sim_scene;
  double sim_snr = 0.0;
  auto* s = app.add_subcommand("simulate", "Synthesize a recording and its ground truth");
  auto* s_cfg = s->add_option("--config", sim_config, "Radar config file");
  auto* s_scene = s->add_option("--scene", sim_scene, "Scene file ([scene], [target.N], ...)");
  s->add_option("--duration", sim.duration_s, "Recording length in seconds")->capture_default_str();
  s->add_option("--seed", sim.seed, "Random seed")->capture_default_str();
  s->add_option("--out", sim.out, "Output directory")->capture_default_str();
  s->add_option("--jobs", sim.jobs, "Worker threads")->capture_default_str();
  s->add_option("--detection-seconds", sim.detection_seconds, "Length of the detection recording")
      ->capture_default_str();
  auto* s_snr = s->add_option("--snr-db", sim_snr, "Per-channel SNR, overrides the scene");

  // process
  ProcessOptions proc;
  std::string p_cfg_s, p_det_s, p_bg_s, p_truth_s, p_targets_s;
  auto* p = app.add_subcommand("process", "Run the vital-sign pipeline on a recording");
  p->add_option("--cube", proc.cube, "Recording (RDC1)")->required();
  auto* p_cfg = p->add_option("--config", p_cfg_s, "Radar config (default: config.ini beside the cube)");
  p->add_option("--angles", proc.angles, "auto, or comma-separated degrees")->capture_default_str();
  auto* p_det = p->add_option("--detection", p_det_s, "Detection recording for --angles auto");
  auto* p_bg = p->add_option("--background", p_bg_s, "Empty-room recording to subtract");
  auto* p_truth = p->add_option("--truth", p_truth_s, "Ground-truth CSV");
  auto* p_targets = p->add_option("--targets", p_targets_s, "Target table mapping directions to truth");
  p->add_option("--mode", proc.mode, "phased_array, phased_mimo or both")->capture_default_str();
  p->add_option("--out", proc.out, "Run directory")->capture_default_str();
  p->add_option("--jobs", proc.jobs, "Worker threads")->capture_default_str();
  p->add_option("--drift-threshold", proc.drift_threshold_rad, "Phase step treated as drift (rad)")
      ->capture_default_str();
  p->add_flag("!--no-drift-calibration", proc.drift_calibration, "Disable drift calibration");

  // sweep
  SweepOptions sw;
  std::string sw_cfg_s;
  auto* w = app.add_subcommand("sweep", "Parameter sweep over simulated scenes");
  w->add_option("--axis", sw.spec.axis, "distance_m, angle_separation_deg or snr_db")->capture_default_str();
  w->add_option("--values", sw.spec.values, "Axis values")->delimiter(',')->required();
  w->add_option("--trials", sw.spec.trials, "Trials per value")->capture_default_str();
  w->add_option("--seed", sw.spec.seed, "Base seed")->capture_default_str();
  auto* w_cfg = w->add_option("--config", sw_cfg_s, "Radar config file");
  w->add_option("--mode", sw.mode, "phased_array, phased_mimo or both")->capture_default_str();
  w->add_option("--duration", sw.duration_s, "Recording length per trial (s)")->capture_default_str();
  w->add_option("--snr-db", sw.snr_db, "Per-channel SNR of the base scene")->capture_default_str();
  w->add_option("--distance", sw.distance_m, "Subject range for the angle axis (m)")->capture_default_str();
  w->add_option("--out", sw.out, "Output directory")->capture_default_str();
  w->add_option("--jobs", sw.jobs, "Concurrent trials")->capture_default_str();

  // evaluate
  EvaluateOptions ev;
  std::string ev_out_s;
  auto* e = app.add_subcommand("evaluate", "Score window estimates against ground truth");
  e->add_option("--estimates", ev.estimates, "Estimate CSV")->required();
  e->add_option("--truth", ev.truth, "Ground-truth CSV")->required();
  auto* e_out = e->add_option("--out", ev_out_s, "Directory for metrics.csv");
  e->add_option("--tolerance", ev.tolerance_bpm, "Accuracy tolerance (bpm)")->capture_default_str();

  // pattern
  PatternOptions pat;
  std::string pat_cfg_s;
  auto* b = app.add_subcommand("pattern", "Export TX, RX and combined beam patterns");
  auto* b_cfg = b->add_option("--config", pat_cfg_s, "Radar config file");
  b->add_option("--steer", pat.steer_deg, "Steering angle (deg)")->capture_default_str();
  b->add_option("--step", pat.step_deg, "Angle step (deg)")->capture_default_str();
  b->add_flag("!--absolute", pat.normalize, "Keep absolute gains instead of 0 dB peaks");
  b->add_option("--out", pat.out, "Output directory")->capture_default_str();

  // plot
  PlotOptions pl;
  auto* g = app.add_subcommand("plot", "Render sweep charts from an aggregate CSV");
  g->add_option("--aggregate", pl.aggregate, "Aggregate CSV")->required();
  g->add_option("--out", pl.out, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return kExitConfig;
  }

  return run_guarded(
      [&]() -> int {
        if (*s) {
          sim.config = opt_if<path>(s_cfg, sim_config);
          sim.scene = opt_if<path>(s_scene, sim_scene);
          sim.snr_db = opt_if(s_snr, sim_snr);
          return cmd_simulate(sim, std::cout);
        }
        if (*p) {
          proc.config = opt_if<path>(p_cfg, p_cfg_s);
          proc.detection = opt_if<path>(p_det, p_det_s);
          proc.background = opt_if<path>(p_bg, p_bg_s);
          proc.truth = opt_if<path>(p_truth, p_truth_s);
          proc.targets = opt_if<path>(p_targets, p_targets_s);
          return cmd_process(proc, std::cout);
        }
        if (*w) {
          sw.config = opt_if<path>(w_cfg, sw_cfg_s);
          return cmd_sweep(sw, std::cout);
        }
        if (*e) {
          ev.out = opt_if<path>(e_out, ev_out_s);
          return cmd_evaluate(ev, std::cout);
        }
        if (*b) {
          pat.config = opt_if<path>(b_cfg, pat_cfg_s);
          return cmd_pattern(pat, std::cout);
        }
        return cmd_plot(pl, std::cout);
      },
      std::cerr);
}
