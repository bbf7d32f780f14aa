#pragma once

// Command implementations behind the `pmv` tool. Each command takes a plain
// options struct, writes its artifacts under an output directory and prints a
// short report to `out`. Errors propagate as exceptions; `run_guarded` maps
// them onto the exit-code contract.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "pmv/app/plot.hpp"
#include "pmv/beamforming.hpp"
#include "pmv/core/config.hpp"
#include "pmv/core/csv.hpp"
#include "pmv/core/cube.hpp"
#include "pmv/core/error.hpp"
#include "pmv/core/hash.hpp"
#include "pmv/core/io.hpp"
#include "pmv/pipeline.hpp"
#include "pmv/simulator.hpp"

namespace pmv::app {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitConfig = 2, kExitPipeline = 3, kExitEvaluation = 4 };

/// Runs `fn` and converts exceptions into exit codes, printing the message to `err`.
template <class F>
int run_guarded(F&& fn, std::ostream& err) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const StageError& e) {
    err << "pipeline error: " << e.what() << '\n';
    return kExitPipeline;
  } catch (const EvaluationError& e) {
    err << "evaluation error: " << e.what() << '\n';
    return kExitEvaluation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

// ---------------------------------------------------------------------------
// Inputs
// ---------------------------------------------------------------------------

/// Radar setup from an optional config file with `PMV_<SECTION>_<KEY>` overrides.
inline RadarSetup load_setup(const std::optional<fs::path>& path) {
  ConfigDocument doc;
  if (path) {
    if (!fs::exists(*path)) throw ParseError("config", "file not found: " + path->string());
    doc = ConfigDocument::parse(read_text_file(*path));
  }
  doc.apply_env_overrides("PMV_");
  auto setup = setup_from_document(doc);
  setup.validate();
  return setup;
}

inline std::string config_hash(const RadarSetup& setup) { return sha256_hex(serialize_config(setup)); }

/// Subjects and impairments of a simulated recording.
struct Scene {
  std::vector<TargetModel> targets;
  ImpairmentSpec impairments;
  double snr_db = 20.0;
  bool explicit_noise = false;  // impairments.noise_std set directly
};

/// One subject at the first beam direction, 1 m, 15 bpm breathing and 78 bpm heartbeat.
inline Scene default_scene(const RadarSetup& setup) {
  Scene s;
  TargetModel t;
  const auto dirs = setup.schedule.directions();
  t.angle_rad = dirs.empty() ? 0.0 : dirs.front();
  t.nominal_range_m = 1.0;
  t.breathing_amplitude_m = 4e-3;
  t.breathing_rate_hz = 0.25;
  t.heartbeat_amplitude_m = 0.1e-3;
  t.heartbeat_rate_hz = 1.3;
  s.targets.push_back(t);
  return s;
}

namespace detail {

using pmv::detail::format_double;

inline std::vector<std::string> numbered_sections(const ConfigDocument& doc, const std::string& prefix) {
  std::vector<std::pair<long, std::string>> found;
  for (const auto& name : doc.section_names()) {
    if (name.rfind(prefix + ".", 0) != 0) continue;
    const std::string idx = name.substr(prefix.size() + 1);
    char* end = nullptr;
    const long v = std::strtol(idx.c_str(), &end, 10);
    if (idx.empty() || *end != '\0') throw ParseError(name, "section index must be an integer");
    found.emplace_back(v, name);
  }
  std::sort(found.begin(), found.end());
  std::vector<std::string> out;
  for (auto& [_, n] : found) out.push_back(n);
  return out;
}

inline TargetModel parse_reflector(const ConfigDocument& doc, const std::string& sec) {
  doc.require_known_keys(sec, {"angle_deg", "range_m", "breathing_amplitude_m", "breathing_rate_hz",
                               "heartbeat_amplitude_m", "heartbeat_rate_hz", "reflection_amplitude",
                               "breathing_phase_rad", "heartbeat_phase_rad"});
  TargetModel t;
  t.angle_rad = deg_to_rad(doc.get_double(sec, "angle_deg", 0.0));
  t.nominal_range_m = doc.get_double(sec, "range_m", 1.0);
  t.breathing_amplitude_m = doc.get_double(sec, "breathing_amplitude_m", 0.0);
  t.breathing_rate_hz = doc.get_double(sec, "breathing_rate_hz", 0.25);
  t.heartbeat_amplitude_m = doc.get_double(sec, "heartbeat_amplitude_m", 0.0);
  t.heartbeat_rate_hz = doc.get_double(sec, "heartbeat_rate_hz", 1.3);
  t.reflection_amplitude = doc.get_double(sec, "reflection_amplitude", 1.0);
  t.breathing_phase_rad = doc.get_double(sec, "breathing_phase_rad", 0.0);
  t.heartbeat_phase_rad = doc.get_double(sec, "heartbeat_phase_rad", 0.0);
  if (!(t.nominal_range_m > 0.0) || !std::isfinite(t.nominal_range_m))
    throw ValidationError(sec + ".range_m", "range must be finite and > 0");
  if (!(std::abs(t.angle_rad) < kPi / 2))
    throw ValidationError(sec + ".angle_deg", "angle must lie in (-90, 90) degrees");
  if (!(t.breathing_amplitude_m >= 0.0 && t.breathing_amplitude_m <= 12e-3))
    throw ValidationError(sec + ".breathing_amplitude_m", "breathing amplitude must lie in [0, 12 mm]");
  if (!(t.heartbeat_amplitude_m >= 0.0) || !std::isfinite(t.heartbeat_amplitude_m))
    throw ValidationError(sec + ".heartbeat_amplitude_m", "heartbeat amplitude must be finite and >= 0");
  for (double v : {t.breathing_rate_hz, t.heartbeat_rate_hz, t.reflection_amplitude,
                   t.breathing_phase_rad, t.heartbeat_phase_rad})
    if (!std::isfinite(v)) throw ValidationError(sec, "non-finite value");
  return t;
}

inline void put_reflector(ConfigDocument& doc, const std::string& sec, const TargetModel& t) {
  doc.set(sec, "angle_deg", pmv::detail::format_degrees(t.angle_rad));
  doc.set(sec, "range_m", format_double(t.nominal_range_m));
  doc.set(sec, "breathing_amplitude_m", format_double(t.breathing_amplitude_m));
  doc.set(sec, "breathing_rate_hz", format_double(t.breathing_rate_hz));
  doc.set(sec, "heartbeat_amplitude_m", format_double(t.heartbeat_amplitude_m));
  doc.set(sec, "heartbeat_rate_hz", format_double(t.heartbeat_rate_hz));
  doc.set(sec, "reflection_amplitude", format_double(t.reflection_amplitude));
  doc.set(sec, "breathing_phase_rad", format_double(t.breathing_phase_rad));
  doc.set(sec, "heartbeat_phase_rad", format_double(t.heartbeat_phase_rad));
}

}  // namespace detail

/// Scene document: `[scene]` (snr_db or noise_std, dc_offset_re, dc_offset_im),
/// `[target.N]`, `[clutter.N]` and `[drift.N]` (frame, subframe, jump_rad).
inline Scene parse_scene(std::string_view text) {
  const auto doc = ConfigDocument::parse(text);
  for (const auto& name : doc.section_names())
    if (name != "scene" && name.rfind("target.", 0) != 0 && name.rfind("clutter.", 0) != 0 &&
        name.rfind("drift.", 0) != 0)
      throw ParseError(name, "unknown section");
  doc.require_known_keys("scene", {"snr_db", "noise_std", "dc_offset_re", "dc_offset_im"});
  Scene s;
  s.snr_db = doc.get_double("scene", "snr_db", 20.0);
  if (auto n = doc.find_double("scene", "noise_std")) {
    if (!(*n >= 0.0)) throw ValidationError("scene.noise_std", "noise_std must be >= 0");
    s.impairments.noise_std = *n;
    s.explicit_noise = true;
  }
  s.impairments.dc_offset = {doc.get_double("scene", "dc_offset_re", 0.0),
                             doc.get_double("scene", "dc_offset_im", 0.0)};
  for (const auto& sec : detail::numbered_sections(doc, "target"))
    s.targets.push_back(detail::parse_reflector(doc, sec));
  for (const auto& sec : detail::numbered_sections(doc, "clutter"))
    s.impairments.background_clutter.push_back(detail::parse_reflector(doc, sec));
  for (const auto& sec : detail::numbered_sections(doc, "drift")) {
    doc.require_known_keys(sec, {"frame", "subframe", "jump_rad"});
    DriftEvent e;
    e.frame = doc.get_uint(sec, "frame", 0);
    e.subframe = doc.get_uint(sec, "subframe", 0);
    e.jump_rad = doc.get_double(sec, "jump_rad", 0.0);
    s.impairments.drift_events.push_back(e);
  }
  if (s.targets.empty()) throw ValidationError("scene.targets", "scene has no [target.N] section");
  return s;
}

inline std::string serialize_scene(const Scene& s) {
  using pmv::detail::format_double;
  ConfigDocument doc;
  if (s.explicit_noise)
    doc.set("scene", "noise_std", format_double(s.impairments.noise_std));
  else
    doc.set("scene", "snr_db", format_double(s.snr_db));
  doc.set("scene", "dc_offset_re", format_double(s.impairments.dc_offset.real()));
  doc.set("scene", "dc_offset_im", format_double(s.impairments.dc_offset.imag()));
  for (std::size_t i = 0; i < s.targets.size(); ++i)
    detail::put_reflector(doc, "target." + std::to_string(i), s.targets[i]);
  for (std::size_t i = 0; i < s.impairments.background_clutter.size(); ++i)
    detail::put_reflector(doc, "clutter." + std::to_string(i), s.impairments.background_clutter[i]);
  for (std::size_t i = 0; i < s.impairments.drift_events.size(); ++i) {
    const auto& e = s.impairments.drift_events[i];
    const std::string sec = "drift." + std::to_string(i);
    doc.set(sec, "frame", std::to_string(e.frame));
    doc.set(sec, "subframe", std::to_string(e.subframe));
    doc.set(sec, "jump_rad", format_double(e.jump_rad));
  }
  return doc.to_string();
}

/// Impairments with the scene SNR resolved into a noise level for `setup`.
inline ImpairmentSpec resolved_impairments(const Scene& s, const RadarSetup& setup) {
  ImpairmentSpec imp = s.impairments;
  if (!s.explicit_noise) imp.noise_std = noise_std_for_snr(setup, s.snr_db);
  return imp;
}

inline std::vector<double> parse_angle_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& tok : pmv::detail::split(text, ',')) {
    auto v = pmv::detail::parse_double(tok);
    if (!v || !std::isfinite(*v)) throw ParseError("angles", "bad angle '" + tok + "'");
    out.push_back(*v);
  }
  if (out.empty()) throw ParseError("angles", "empty angle list");
  return out;
}

// ---------------------------------------------------------------------------
// CSV schemas
// ---------------------------------------------------------------------------

inline CsvTable truth_table(const GroundTruth& gt) {
  CsvTable t("truth", {"window_start_s", "target_id", "br_bpm", "hr_bpm"});
  for (const auto& r : gt.records)
    t.add_row({fmt_num(r.window_start_s, 3), std::to_string(r.target_id), fmt_num(r.br_bpm),
               fmt_num(r.hr_bpm)});
  return t;
}

inline GroundTruth truth_from_table(const CsvTable& t) {
  GroundTruth gt;
  for (std::size_t r = 0; r < t.row_count(); ++r) {
    const double id = t.number(r, "target_id");
    if (!(id >= 0.0) || id != std::floor(id))
      throw EvaluationError("truth row " + std::to_string(r) + ": bad target_id");
    gt.records.push_back({t.number(r, "window_start_s"), static_cast<std::size_t>(id),
                          t.number(r, "br_bpm"), t.number(r, "hr_bpm")});
  }
  return gt;
}

inline CsvTable targets_table(const std::vector<TargetModel>& targets) {
  CsvTable t("targets", {"target_id", "angle_deg", "range_m", "br_bpm", "hr_bpm"});
  for (std::size_t i = 0; i < targets.size(); ++i)
    t.add_row({std::to_string(i), fmt_num(rad_to_deg(targets[i].angle_rad)),
               fmt_num(targets[i].nominal_range_m), fmt_num(60.0 * targets[i].breathing_rate_hz),
               fmt_num(60.0 * targets[i].heartbeat_rate_hz)});
  return t;
}

/// Nearest target by angle for each direction; directions with no target
/// within `tol_deg` get none.
inline std::vector<std::optional<std::size_t>> assign_truth_targets(const std::vector<double>& angles_deg,
                                                                    const CsvTable& targets,
                                                                    double tol_deg = 10.0) {
  std::vector<std::optional<std::size_t>> out;
  for (double a : angles_deg) {
    std::optional<std::size_t> best;
    double best_err = tol_deg;
    for (std::size_t r = 0; r < targets.row_count(); ++r) {
      const double err = std::abs(targets.number(r, "angle_deg") - a);
      if (err < best_err) {
        best_err = err;
        best = static_cast<std::size_t>(targets.number(r, "target_id"));
      }
    }
    out.push_back(best);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

struct Manifest {
  nlohmann::ordered_json doc;
  fs::path dir;

  Manifest(fs::path out_dir, const std::string& command) : dir(std::move(out_dir)) {
    doc["command"] = command;
    doc["files"] = nlohmann::ordered_json::object();
  }

  /// Writes a file under the run directory and records its hash.
  void write(const std::string& name, std::string_view bytes) {
    write_file_atomic(dir / name, bytes);
    doc["files"][name] = sha256_hex(bytes);
  }

  void finish() { write_file_atomic(dir / "manifest.json", doc.dump(2) + "\n"); }
};

inline std::optional<nlohmann::json> read_manifest(const fs::path& dir) {
  const auto p = dir / "manifest.json";
  if (!fs::exists(p)) return std::nullopt;
  try {
    return nlohmann::json::parse(read_text_file(p));
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateOptions {
  std::optional<fs::path> config;
  std::optional<fs::path> scene;
  double duration_s = 120.0;
  std::uint64_t seed = 1;
  fs::path out = "sim";
  unsigned jobs = 1;
  double detection_seconds = 3.0;
  std::optional<double> snr_db;
};

/// Writes cube.rdc (vital-phase recording), detection.rdc (TDM-MIMO recording of
/// the same scene), truth.csv, targets.csv, scene.ini, config.ini and manifest.json.
inline int cmd_simulate(const SimulateOptions& o, std::ostream& out) {
  const auto setup = load_setup(o.config);
  Scene scene = o.scene ? parse_scene(read_text_file(*o.scene)) : default_scene(setup);
  if (o.snr_db) {
    scene.snr_db = *o.snr_db;
    scene.explicit_noise = false;
  }
  if (!(o.detection_seconds > 0.0))
    throw ValidationError("detection_seconds", "detection recording length must be > 0");

  SimulationOptions sopt;
  sopt.jobs = o.jobs;
  auto sim = synthesize_cube(scene.targets, setup, resolved_impairments(scene, setup), o.duration_s,
                             o.seed, sopt);
  const auto hash = config_hash(setup);
  sim.cube.provenance = {hash, o.seed};

  const auto mimo = tdm_mimo_setup(setup);
  ImpairmentSpec det_imp = resolved_impairments(scene, mimo);
  det_imp.drift_events.clear();
  const auto det = synthesize_cube(scene.targets, mimo, det_imp, o.detection_seconds,
                                   pmv::detail::splitmix64(o.seed ^ 0xD7E7C7104ull), sopt);

  Manifest m(o.out, "simulate");
  m.doc["seed"] = o.seed;
  m.doc["duration_s"] = o.duration_s;
  m.doc["config_hash"] = hash;
  const auto& d = sim.cube.dims();
  m.doc["dims"] = {d.frames, d.subframes, d.chirps, d.rx, d.samples};
  const auto cube_bytes = encode_cube(sim.cube);
  m.write("cube.rdc", std::string_view(cube_bytes.data(), cube_bytes.size()));
  const auto det_bytes = encode_cube(det.cube);
  m.write("detection.rdc", std::string_view(det_bytes.data(), det_bytes.size()));
  m.write("truth.csv", truth_table(sim.truth).to_string());
  m.write("targets.csv", targets_table(scene.targets).to_string());
  m.write("scene.ini", serialize_scene(scene));
  m.write("config.ini", serialize_config(setup));
  m.finish();

  out << "cube " << d.frames << " x " << d.subframes << " x " << d.chirps << " x " << d.rx << " x "
      << d.samples << " (" << fmt_num(o.duration_s, 2) << " s, seed " << o.seed << ")\n";
  for (std::size_t i = 0; i < scene.targets.size(); ++i) {
    const auto& t = scene.targets[i];
    out << "target " << i << ": " << fmt_num(rad_to_deg(t.angle_rad), 1) << " deg, "
        << fmt_num(t.nominal_range_m, 2) << " m, BR " << fmt_num(60 * t.breathing_rate_hz, 1)
        << " bpm, HR " << fmt_num(60 * t.heartbeat_rate_hz, 1) << " bpm\n";
  }
  out << "noise " << (scene.explicit_noise ? "std " + fmt_num(scene.impairments.noise_std)
                                           : fmt_num(scene.snr_db, 1) + " dB SNR")
      << "\nwritten to " << o.out.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// process
// ---------------------------------------------------------------------------

struct ProcessOptions {
  fs::path cube;
  std::optional<fs::path> config;      // default: config.ini beside the cube
  std::string angles = "auto";         // "auto" or comma-separated degrees
  std::optional<fs::path> detection;   // default: detection.rdc beside the cube
  std::optional<fs::path> background;
  std::optional<fs::path> truth;
  std::optional<fs::path> targets;     // default: targets.csv beside the truth file
  std::string mode = "phased_mimo";    // phased_array | phased_mimo | both
  fs::path out = "run";
  unsigned jobs = 1;
  bool drift_calibration = true;
  double drift_threshold_rad = 1.5;
};

namespace detail {

inline std::optional<double> median_of(const std::vector<VitalRecord>& w, bool heart) {
  std::vector<double> v;
  for (const auto& r : w)
    if (auto x = heart ? r.hr_bpm : r.br_bpm) v.push_back(*x);
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline std::string opt_num(const std::optional<double>& v, int prec = 6) {
  return v ? fmt_num(*v, prec) : "nan";
}

inline std::string csv_safe(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

/// Angles to process: explicit list, or detection snapped onto the schedule.
inline std::vector<double> resolve_angles(const ProcessOptions& o, const RadarSetup& setup,
                                          std::vector<std::string>& notes) {
  if (o.angles != "auto") return parse_angle_list(o.angles);
  const fs::path det_path = o.detection.value_or(o.cube.parent_path() / "detection.rdc");
  if (!fs::exists(det_path))
    throw ParseError("angles", "auto angles need a detection recording, missing " + det_path.string());
  const auto det_cube = read_cube_file(det_path.string());
  const auto det = run_detection_phase(det_cube, tdm_mimo_setup(setup));
  std::vector<double> out;
  const auto dirs = setup.schedule.directions();
  for (double a : det.angles_deg) {
    const auto sd = match_schedule_direction(setup.schedule, deg_to_rad(a), deg_to_rad(5.0));
    if (!sd) {
      notes.push_back("detected " + fmt_num(a, 2) + " deg has no scheduled beam");
      continue;
    }
    const double snapped = rad_to_deg(dirs[*sd]);
    notes.push_back("detected " + fmt_num(a, 2) + " deg -> beam " + fmt_num(snapped, 2) + " deg");
    if (std::find(out.begin(), out.end(), snapped) == out.end()) out.push_back(snapped);
  }
  if (out.empty()) notes.push_back("detection found no subject");
  return out;
}

}  // namespace detail

inline int cmd_process(const ProcessOptions& o, std::ostream& out) {
  std::vector<ArrayMode> modes;
  if (o.mode == "phased_mimo")
    modes = {ArrayMode::phased_mimo};
  else if (o.mode == "phased_array")
    modes = {ArrayMode::phased_array};
  else if (o.mode == "both")
    modes = {ArrayMode::phased_array, ArrayMode::phased_mimo};
  else
    throw ParseError("mode", "expected phased_array, phased_mimo or both, got '" + o.mode + "'");

  std::optional<fs::path> cfg = o.config;
  if (!cfg && fs::exists(o.cube.parent_path() / "config.ini")) cfg = o.cube.parent_path() / "config.ini";
  const auto setup = load_setup(cfg);
  if (!fs::exists(o.cube)) throw ParseError("cube", "file not found: " + o.cube.string());
  const auto cube = read_cube_file(o.cube.string());
  std::optional<RadarDataCube> background;
  if (o.background) background = read_cube_file(o.background->string());

  std::vector<std::string> notes;
  const auto angles_deg = detail::resolve_angles(o, setup, notes);
  std::vector<double> angles_rad;
  for (double a : angles_deg) angles_rad.push_back(deg_to_rad(a));

  PipelineOptions popt;
  popt.jobs = o.jobs;
  popt.drift_calibration = o.drift_calibration;
  popt.drift_threshold_rad = o.drift_threshold_rad;
  std::optional<GroundTruth> truth;
  if (o.truth) {
    truth = truth_from_table(CsvTable::parse(read_text_file(*o.truth)));
    const fs::path tp = o.targets.value_or(o.truth->parent_path() / "targets.csv");
    if (fs::exists(tp)) {
      popt.truth_targets = assign_truth_targets(angles_deg, CsvTable::parse(read_text_file(tp)));
    } else {
      for (std::size_t i = 0; i < angles_deg.size(); ++i) popt.truth_targets.push_back(i);
    }
  }

  std::vector<PipelineRun> runs;
  for (auto mode : modes) {
    popt.mode = mode;
    runs.push_back(run_vital_phase(cube, angles_rad, setup, popt, background ? &*background : nullptr,
                                   truth ? &*truth : nullptr));
  }

  Manifest m(o.out, "process");
  m.doc["config_hash"] = config_hash(setup);
  if (auto sm = read_manifest(o.cube.parent_path()); sm && sm->contains("seed"))
    m.doc["seed"] = (*sm)["seed"];
  m.doc["cube_sha256"] = sha256_file(o.cube.string());
  m.doc["angles_deg"] = angles_deg;
  m.doc["mode"] = o.mode;
  m.write("config.ini", serialize_config(setup));

  CsvTable report("report", {"mode", "direction", "target_id", "angle_deg", "range_bin", "br_bpm",
                             "hr_bpm", "br_std_bpm", "br_rmse_bpm", "br_accuracy", "hr_std_bpm",
                             "hr_rmse_bpm", "hr_accuracy", "status"});
  CsvTable vitals("vitals", {"mode", "direction", "target_id", "angle_deg", "window_start_s",
                             "br_bpm", "hr_bpm"});
  CsvTable log("log", {"mode", "direction", "stage", "ok", "message"});
  bool failed = false;
  std::ostringstream failures;
  for (const auto& run : runs) {
    const std::string mode = to_string(run.mode);
    for (const auto& r : run.log)
      log.add_row({mode, std::to_string(r.direction), r.stage, r.ok ? "1" : "0", detail::csv_safe(r.message)});
    for (const auto& d : run.directions) {
      const std::string tag = mode + "_" + std::to_string(d.direction);
      const std::string angle = fmt_num(rad_to_deg(d.angle_rad), 3);
      std::string target;
      if (!truth)
        target = std::to_string(d.direction);
      else if (d.direction < popt.truth_targets.size() && popt.truth_targets[d.direction])
        target = std::to_string(*popt.truth_targets[d.direction]);
      if (!d.ok) {
        failed = true;
        failures << "stage " << d.failed_stage << " failed for " << mode << " direction " << d.direction
                 << " (" << angle << " deg): " << d.error << '\n';
      }
      if (!d.range_profile_db.empty()) {
        CsvTable prof("range_profile", {"bin", "range_m", "magnitude_db"});
        const double bw = setup.chirp.range_bin_m();
        for (std::size_t h = 0; h < d.range_profile_db.size(); ++h)
          prof.add_row({std::to_string(h), fmt_num(bw * static_cast<double>(h), 4),
                        fmt_num(d.range_profile_db[h], 3)});
        m.write("range_profile_" + tag + ".csv", prof.to_string());
      }
      if (!d.phase.values.empty()) {
        CsvTable ph("phase", {"frame", "t_s", "phase_rad"});
        for (std::size_t l = 0; l < d.phase.values.size(); ++l)
          ph.add_row({std::to_string(l), fmt_num(static_cast<double>(l) / d.phase.sample_rate_hz, 3),
                      fmt_num(d.phase.values[l], 6)});
        m.write("phase_" + tag + ".csv", ph.to_string());
      }
      for (const auto& w : d.report.windows)
        vitals.add_row({mode, std::to_string(d.direction), target, angle, fmt_num(w.window_start_s, 3),
                        detail::opt_num(w.br_bpm), detail::opt_num(w.hr_bpm)});
      auto metric = [](const std::optional<VitalMetrics>& v, int which) -> std::string {
        if (!v) return "nan";
        return fmt_num(which == 0 ? v->std_bpm : which == 1 ? v->rmse_bpm : v->accuracy, 4);
      };
      const auto& rep = d.report;
      report.add_row({mode, std::to_string(d.direction), target, angle,
                      d.ok ? std::to_string(d.range_bin) : "",
                      detail::opt_num(detail::median_of(rep.windows, false), 3),
                      detail::opt_num(detail::median_of(rep.windows, true), 3), metric(rep.br_metrics, 0),
                      metric(rep.br_metrics, 1), metric(rep.br_metrics, 2), metric(rep.hr_metrics, 0),
                      metric(rep.hr_metrics, 1), metric(rep.hr_metrics, 2),
                      d.ok ? "ok" : "failed at " + d.failed_stage});
    }
  }
  m.write("report.csv", report.to_string());
  m.write("vitals.csv", vitals.to_string());
  m.write("log.csv", log.to_string());
  m.finish();

  for (const auto& n : notes) out << n << '\n';
  for (const auto& run : runs)
    for (const auto& dgn : run.diagnostics) out << to_string(run.mode) << ": " << dgn << '\n';
  out << std::left << std::setw(13) << "mode" << std::setw(5) << "dir" << std::setw(8) << "target"
      << std::setw(9) << "angle" << std::setw(8) << "BR" << std::setw(8) << "HR" << std::setw(8)
      << "BR_std" << std::setw(9) << "BR_rmse" << std::setw(8) << "BR_acc" << std::setw(8) << "HR_std"
      << std::setw(9) << "HR_rmse" << std::setw(8) << "HR_acc" << "status\n";
  for (std::size_t r = 0; r < report.row_count(); ++r) {
    auto c = [&](const char* col) { return report.cell(r, col); };
    auto short_num = [&](const char* col, int prec) {
      const double v = report.number(r, col);
      return std::isnan(v) ? std::string("-") : fmt_num(v, prec);
    };
    out << std::setw(13) << c("mode") << std::setw(5) << c("direction") << std::setw(8)
        << (c("target_id").empty() ? "-" : c("target_id")) << std::setw(9) << short_num("angle_deg", 1)
        << std::setw(8) << short_num("br_bpm", 2) << std::setw(8) << short_num("hr_bpm", 2) << std::setw(8)
        << short_num("br_std_bpm", 2) << std::setw(9) << short_num("br_rmse_bpm", 2) << std::setw(8)
        << short_num("br_accuracy", 2) << std::setw(8) << short_num("hr_std_bpm", 2) << std::setw(9)
        << short_num("hr_rmse_bpm", 2) << std::setw(8) << short_num("hr_accuracy", 2) << c("status")
        << '\n';
  }
  out << std::right;
  if (failed) {
    out << failures.str();
    return kExitPipeline;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvaluateOptions {
  fs::path estimates;
  fs::path truth;
  std::optional<fs::path> out;  // directory for metrics.csv
  double tolerance_bpm = 3.0;
};

/// Metrics per (mode, target, vital). The estimate table needs window_start_s,
/// target_id, br_bpm and hr_bpm; a `mode` column splits the groups further.
inline CsvTable evaluate_tables(const CsvTable& est, const CsvTable& truth, double tolerance_bpm = 3.0) {
  for (const char* col : {"window_start_s", "target_id", "br_bpm", "hr_bpm"}) {
    est.column_index(col);
    truth.column_index(col);
  }
  const bool has_mode = std::find(est.columns().begin(), est.columns().end(), "mode") != est.columns().end();
  struct Series {
    std::vector<double> t;
    std::vector<std::optional<double>> br, hr;
  };
  std::map<std::pair<std::string, std::string>, Series> groups;
  for (std::size_t r = 0; r < est.row_count(); ++r) {
    const std::string id = est.cell(r, "target_id");
    if (id.empty()) continue;
    auto& s = groups[{has_mode ? est.cell(r, "mode") : "", id}];
    s.t.push_back(est.number(r, "window_start_s"));
    const double b = est.number(r, "br_bpm"), h = est.number(r, "hr_bpm");
    s.br.push_back(std::isnan(b) ? std::nullopt : std::optional(b));
    s.hr.push_back(std::isnan(h) ? std::nullopt : std::optional(h));
  }
  std::map<std::string, std::vector<std::pair<double, std::pair<double, double>>>> truth_by_id;
  for (std::size_t r = 0; r < truth.row_count(); ++r)
    truth_by_id[truth.cell(r, "target_id")].push_back(
        {truth.number(r, "window_start_s"), {truth.number(r, "br_bpm"), truth.number(r, "hr_bpm")}});

  CsvTable m("metrics", {"mode", "target_id", "vital", "std_bpm", "rmse_bpm", "accuracy", "valid", "windows"});
  for (const auto& [key, s] : groups) {
    auto it = truth_by_id.find(key.second);
    if (it == truth_by_id.end()) throw EvaluationError("no truth rows for target " + key.second);
    const auto& tr = it->second;
    if (tr.size() != s.t.size())
      throw EvaluationError("window grid mismatch for target " + key.second + ": " +
                            std::to_string(s.t.size()) + " estimates vs " + std::to_string(tr.size()) +
                            " truth windows");
    std::vector<double> tbr, thr;
    for (std::size_t i = 0; i < tr.size(); ++i) {
      if (std::abs(tr[i].first - s.t[i]) > 1e-6)
        throw EvaluationError("window grid mismatch for target " + key.second + " at window " +
                              std::to_string(i));
      tbr.push_back(tr[i].second.first);
      thr.push_back(tr[i].second.second);
    }
    for (const auto& [vital, mv] : {std::pair{"br", compute_metrics(s.br, tbr, tolerance_bpm)},
                                    std::pair{"hr", compute_metrics(s.hr, thr, tolerance_bpm)}})
      m.add_row({key.first, key.second, vital, fmt_num(mv.std_bpm, 4), fmt_num(mv.rmse_bpm, 4),
                 fmt_num(mv.accuracy, 4), std::to_string(mv.valid), std::to_string(mv.windows)});
  }
  if (m.row_count() == 0) throw EvaluationError("no estimates with a target_id");
  return m;
}

inline int cmd_evaluate(const EvaluateOptions& o, std::ostream& out) {
  const auto est = CsvTable::parse(read_text_file(o.estimates));
  const auto truth = CsvTable::parse(read_text_file(o.truth));
  const auto m = evaluate_tables(est, truth, o.tolerance_bpm);
  if (o.out) {
    Manifest man(*o.out, "evaluate");
    man.doc["estimates_sha256"] = sha256_file(o.estimates.string());
    man.doc["truth_sha256"] = sha256_file(o.truth.string());
    man.write("metrics.csv", m.to_string());
    man.finish();
  }
  out << std::left << std::setw(13) << "mode" << std::setw(8) << "target" << std::setw(7) << "vital"
      << std::setw(10) << "std" << std::setw(10) << "rmse" << "accuracy\n";
  for (std::size_t r = 0; r < m.row_count(); ++r)
    out << std::setw(13) << (m.cell(r, "mode").empty() ? "-" : m.cell(r, "mode")) << std::setw(8)
        << m.cell(r, "target_id") << std::setw(7) << m.cell(r, "vital") << std::setw(10)
        << m.cell(r, "std_bpm") << std::setw(10) << m.cell(r, "rmse_bpm") << m.cell(r, "accuracy") << '\n';
  out << std::right;
  return kExitOk;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SweepSpec {
  std::string axis = "distance_m";  // distance_m | angle_separation_deg | snr_db
  std::vector<double> values;
  std::size_t trials = 1;
  std::uint64_t seed = 1;

  void validate() const {
    if (axis != "distance_m" && axis != "angle_separation_deg" && axis != "snr_db")
      throw ValidationError("axis", "axis must be distance_m, angle_separation_deg or snr_db, got '" +
                                        axis + "'");
    if (values.empty()) throw ValidationError("values", "sweep values must be nonempty");
    if (trials < 1) throw ValidationError("trials", "trials must be >= 1");
    for (double v : values) {
      if (!std::isfinite(v)) throw ValidationError("values", "non-finite sweep value");
      if (axis == "distance_m" && !(v > 0.0))
        throw ValidationError("values", "distances must be > 0");
      if (axis == "angle_separation_deg" && !(v > 0.0 && v < 120.0))
        throw ValidationError("values", "angle separation must lie in (0, 120) degrees");
    }
  }
};

struct SweepOptions {
  SweepSpec spec;
  std::optional<fs::path> config;
  std::string mode = "both";
  double duration_s = 120.0;
  double snr_db = 10.0;           // base scene SNR for the distance and angle axes
  double distance_m = 1.6;        // base range for the angle axis
  double single_range_m = 1.0;    // base range for the snr axis
  fs::path out = "sweep";
  unsigned jobs = 1;
};

/// Base scene and beam plan for one sweep point. Single-subject axes place the
/// subject at broadside; the angle axis places two subjects at +-sep/2 with
/// distinct vitals (12/18 bpm BR, 66/90 bpm HR).
inline std::pair<RadarSetup, Scene> sweep_scene(const SweepOptions& o, const RadarSetup& base,
                                                double value, std::uint64_t trial_seed) {
  std::mt19937_64 rng(trial_seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
  auto subject = [&](double angle_deg, double range_m, double br_bpm, double hr_bpm) {
    TargetModel t;
    t.angle_rad = deg_to_rad(angle_deg);
    t.nominal_range_m = range_m;
    t.breathing_amplitude_m = 4e-3;
    t.breathing_rate_hz = br_bpm / 60.0;
    t.heartbeat_amplitude_m = 0.1e-3;
    t.heartbeat_rate_hz = hr_bpm / 60.0;
    t.breathing_phase_rad = phase(rng);
    t.heartbeat_phase_rad = phase(rng);
    return t;
  };
  Scene s;
  s.snr_db = o.snr_db;
  RadarSetup setup;
  if (o.spec.axis == "angle_separation_deg") {
    setup = with_directions(base, {deg_to_rad(value / 2), deg_to_rad(-value / 2)});
    s.targets = {subject(value / 2, o.distance_m, 12.0, 66.0), subject(-value / 2, o.distance_m, 18.0, 90.0)};
  } else {
    setup = with_directions(base, {0.0});
    s.targets = {subject(0.0, o.spec.axis == "distance_m" ? value : o.single_range_m, 15.0, 78.0)};
    if (o.spec.axis == "snr_db") s.snr_db = value;
  }
  return {setup, s};
}

/// One row per (value, trial, mode, target, vital) plus the per-(value, mode, vital) means.
struct SweepResult {
  CsvTable trials;
  CsvTable aggregate;
};

inline SweepResult run_sweep(const SweepOptions& o) {
  o.spec.validate();
  std::vector<ArrayMode> modes;
  if (o.mode == "both")
    modes = {ArrayMode::phased_array, ArrayMode::phased_mimo};
  else if (o.mode == "phased_array")
    modes = {ArrayMode::phased_array};
  else if (o.mode == "phased_mimo")
    modes = {ArrayMode::phased_mimo};
  else
    throw ParseError("mode", "expected phased_array, phased_mimo or both, got '" + o.mode + "'");
  const auto base = load_setup(o.config);

  const std::size_t n_points = o.spec.values.size() * o.spec.trials;
  std::vector<std::vector<std::vector<std::string>>> rows(n_points);
  const std::string axis = o.spec.axis;
  auto work = [&](std::size_t idx) {
    const double value = o.spec.values[idx / o.spec.trials];
    const std::size_t trial = idx % o.spec.trials;
    const std::uint64_t seed = pmv::detail::splitmix64(o.spec.seed + idx);
    auto emit = [&](const std::string& mode, std::size_t target, const char* vital,
                    const std::optional<VitalMetrics>& m, const std::string& status) {
      rows[idx].push_back({axis, fmt_num(value, 4), std::to_string(trial), std::to_string(seed), mode,
                           std::to_string(target), vital, m ? fmt_num(m->std_bpm, 4) : "nan",
                           m ? fmt_num(m->rmse_bpm, 4) : "nan", m ? fmt_num(m->accuracy, 4) : "nan", status});
    };
    std::size_t n_targets = axis == "angle_separation_deg" ? 2 : 1;
    try {
      auto [setup, scene] = sweep_scene(o, base, value, seed);
      n_targets = scene.targets.size();
      const auto sim = synthesize_cube(scene.targets, setup, resolved_impairments(scene, setup),
                                       o.duration_s, seed);
      const auto dirs = setup.schedule.directions();
      PipelineOptions popt;
      for (std::size_t i = 0; i < dirs.size(); ++i) popt.truth_targets.push_back(i);
      for (auto mode : modes) {
        popt.mode = mode;
        const auto run = run_vital_phase(sim.cube, dirs, setup, popt, nullptr, &sim.truth);
        for (const auto& d : run.directions) {
          const std::string status = d.ok ? "ok" : detail::csv_safe("failed at " + d.failed_stage + ": " + d.error);
          const std::size_t target = d.direction;
          emit(to_string(mode), target, "br", d.ok ? d.report.br_metrics : std::nullopt, status);
          emit(to_string(mode), target, "hr", d.ok ? d.report.hr_metrics : std::nullopt, status);
        }
      }
    } catch (const std::exception& e) {
      rows[idx].clear();
      for (auto mode : modes)
        for (std::size_t t = 0; t < n_targets; ++t)
          for (const char* v : {"br", "hr"})
            emit(to_string(mode), t, v, std::nullopt, detail::csv_safe(std::string("failed: ") + e.what()));
    }
  };
  pmv::detail::parallel_for(n_points, o.jobs, work);

  SweepResult res{CsvTable("sweep_trials", {"axis", "axis_value", "trial", "seed", "mode", "target_id",
                                            "vital", "std_bpm", "rmse_bpm", "accuracy", "status"}),
                  CsvTable("sweep_aggregate", {"axis", "axis_value", "mode", "vital", "std_bpm", "rmse_bpm",
                                               "accuracy", "samples", "failed"})};
  struct Acc {
    double std_sum = 0, rmse_sum = 0, acc_sum = 0;
    std::size_t n = 0, failed = 0;
  };
  std::vector<std::string> order;
  std::map<std::string, Acc> acc;
  for (const auto& per_point : rows)
    for (const auto& r : per_point) {
      res.trials.add_row(r);
      const std::string key = r[1] + "," + r[4] + "," + r[6];
      if (!acc.count(key)) order.push_back(key);
      auto& a = acc[key];
      if (r[10] != "ok") {
        ++a.failed;
        continue;
      }
      const double s = std::stod(r[7]), rm = std::stod(r[8]), ac = std::stod(r[9]);
      // A run with no valid window counts with zero accuracy but no spread/error.
      if (std::isfinite(s)) a.std_sum += s;
      if (std::isfinite(rm)) a.rmse_sum += rm;
      a.acc_sum += ac;
      ++a.n;
    }
  for (const auto& key : order) {
    const auto parts = pmv::detail::split(key, ',');
    const auto& a = acc[key];
    const double n = static_cast<double>(a.n);
    res.aggregate.add_row({axis, parts[0], parts[1], parts[2], a.n ? fmt_num(a.std_sum / n, 4) : "nan",
                           a.n ? fmt_num(a.rmse_sum / n, 4) : "nan", a.n ? fmt_num(a.acc_sum / n, 4) : "nan",
                           std::to_string(a.n), std::to_string(a.failed)});
  }
  return res;
}

inline int cmd_sweep(const SweepOptions& o, std::ostream& out) {
  const auto res = run_sweep(o);
  Manifest m(o.out, "sweep");
  m.doc["seed"] = o.spec.seed;
  m.doc["axis"] = o.spec.axis;
  m.doc["values"] = o.spec.values;
  m.doc["trials"] = o.spec.trials;
  m.doc["mode"] = o.mode;
  m.doc["duration_s"] = o.duration_s;
  m.doc["config_hash"] = config_hash(load_setup(o.config));
  const std::string aggregate = res.aggregate.to_string();
  m.write("trials.csv", res.trials.to_string());
  m.write("aggregate.csv", aggregate);
  for (const auto& [name, svg] : sweep_plots(CsvTable::parse(aggregate))) m.write(name, svg);
  m.finish();

  out << res.trials.row_count() << " trial rows, " << res.aggregate.row_count() << " aggregate rows\n";
  out << std::left << std::setw(12) << "value" << std::setw(14) << "mode" << std::setw(7) << "vital"
      << std::setw(10) << "std" << std::setw(10) << "rmse" << std::setw(10) << "accuracy" << "failed\n";
  for (std::size_t r = 0; r < res.aggregate.row_count(); ++r) {
    auto c = [&](const char* col) { return res.aggregate.cell(r, col); };
    out << std::setw(12) << c("axis_value") << std::setw(14) << c("mode") << std::setw(7) << c("vital")
        << std::setw(10) << c("std_bpm") << std::setw(10) << c("rmse_bpm") << std::setw(10) << c("accuracy")
        << c("failed") << '\n';
  }
  out << std::right;
  return kExitOk;
}

// ---------------------------------------------------------------------------
// pattern / plot
// ---------------------------------------------------------------------------

struct PatternOptions {
  std::optional<fs::path> config;
  double steer_deg = 30.0;
  double step_deg = 0.5;
  bool normalize = true;
  fs::path out = "pattern";
};

inline int cmd_pattern(const PatternOptions& o, std::ostream& out) {
  if (!(o.step_deg > 0.0 && o.step_deg <= 10.0))
    throw ValidationError("step_deg", "angle step must lie in (0, 10] degrees");
  const auto setup = load_setup(o.config);
  const auto rows = beam_patterns(setup, deg_to_rad(o.steer_deg), o.step_deg, o.normalize);
  CsvTable t("pattern", {"theta_deg", "tx_db", "rx_db", "combined_db"});
  PlotSpec spec;
  spec.title = "Beam pattern, steering " + fmt_num(o.steer_deg, 1) + " deg";
  spec.x_label = "theta_deg";
  spec.y_label = o.normalize ? "gain (dB, normalized)" : "gain (dB)";
  spec.series = {{"TX", {}}, {"RX", {}}, {"combined", {}}};
  for (const auto& r : rows) {
    t.add_row({fmt_num(r.theta_deg, 3), fmt_num(r.tx_db, 4), fmt_num(r.rx_db, 4), fmt_num(r.combined_db, 4)});
    // Clip deep nulls so the chart keeps a readable range.
    spec.series[0].points.emplace_back(r.theta_deg, std::max(r.tx_db, -60.0));
    spec.series[1].points.emplace_back(r.theta_deg, std::max(r.rx_db, -60.0));
    spec.series[2].points.emplace_back(r.theta_deg, std::max(r.combined_db, -60.0));
  }
  Manifest m(o.out, "pattern");
  m.doc["steer_deg"] = o.steer_deg;
  m.doc["config_hash"] = config_hash(setup);
  m.write("pattern.csv", t.to_string());
  m.write("pattern.svg", render_svg(spec));
  m.finish();
  out << rows.size() << " pattern rows written to " << (o.out / "pattern.csv").string() << '\n';
  return kExitOk;
}

struct PlotOptions {
  fs::path aggregate;
  fs::path out = "plots";
};

/// Regenerates the sweep charts from an aggregate CSV.
inline int cmd_plot(const PlotOptions& o, std::ostream& out) {
  const auto table = CsvTable::parse(read_text_file(o.aggregate));
  for (const char* col : {"axis", "axis_value", "mode", "vital", "accuracy", "rmse_bpm"}) table.column_index(col);
  for (const auto& [name, svg] : sweep_plots(table)) {
    write_file_atomic(o.out / name, svg);
    out << "wrote " << (o.out / name).string() << '\n';
  }
  return kExitOk;
}

}  // namespace pmv::app
