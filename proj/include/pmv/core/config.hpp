#pragma once

// Radar configuration: chirp timing, antenna geometry, subarray partition and
// the TDM subframe schedule, plus the INI-style document they are read from.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "pmv/core/constants.hpp"
#include "pmv/core/error.hpp"

extern char** environ;

namespace pmv {

struct ChirpConfig {
  double start_frequency_hz = 77e9;
  double slope_hz_per_s = 29.982e12;
  double idle_time_s = 100e-6;
  double tx_start_time_s = 0.0;
  double adc_start_time_s = 6e-6;
  std::uint32_t num_adc_samples = 256;
  double adc_sample_rate_hz = 10e6;
  double ramp_end_time_s = 60e-6;
  std::uint32_t subframes_per_frame = 4;
  std::uint32_t chirps_per_subframe = 1;
  double subframe_period_s = 12.5e-3;
  double frame_period_s = 50e-3;

  double adc_sample_interval_s() const { return 1.0 / adc_sample_rate_hz; }
  double slow_time_rate_hz() const { return 1.0 / frame_period_s; }
  double chirp_period_s() const { return idle_time_s + ramp_end_time_s; }
  double wavelength_m() const { return kSpeedOfLight / start_frequency_hz; }

  /// Bandwidth swept while the ADC samples, S * N_s / f_adc.
  double sampled_bandwidth_hz() const {
    return slope_hz_per_s * num_adc_samples / adc_sample_rate_hz;
  }
  double range_bin_m() const { return kSpeedOfLight / (2.0 * sampled_bandwidth_hz()); }
  double beat_frequency_hz(double range_m) const {
    return 2.0 * slope_hz_per_s * range_m / kSpeedOfLight;
  }
  /// Fractional DFT index h = N_s f_b T_f of a reflector at `range_m`.
  double range_to_bin(double range_m) const {
    return num_adc_samples * beat_frequency_hz(range_m) * adc_sample_interval_s();
  }

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v))
        throw ValidationError("positive", std::string(name) + " must be > 0");
    };
    positive(start_frequency_hz, "chirp.start_frequency_hz");
    positive(slope_hz_per_s, "chirp.slope_hz_per_s");
    positive(idle_time_s, "chirp.idle_time_s");
    positive(adc_start_time_s, "chirp.adc_start_time_s");
    positive(adc_sample_rate_hz, "chirp.adc_sample_rate_hz");
    positive(ramp_end_time_s, "chirp.ramp_end_time_s");
    positive(subframe_period_s, "chirp.subframe_period_s");
    positive(frame_period_s, "chirp.frame_period_s");
    if (!(tx_start_time_s >= 0.0) || !std::isfinite(tx_start_time_s))
      throw ValidationError("positive", "chirp.tx_start_time_s must be >= 0");
    if (num_adc_samples == 0) throw ValidationError("positive", "chirp.num_adc_samples must be > 0");
    if (subframes_per_frame == 0)
      throw ValidationError("positive", "chirp.subframes_per_frame must be > 0");
    if (chirps_per_subframe == 0)
      throw ValidationError("positive", "chirp.chirps_per_subframe must be > 0");

    const double adc_end = adc_start_time_s + num_adc_samples / adc_sample_rate_hz;
    if (adc_end > ramp_end_time_s * (1.0 + 1e-12))
      throw ValidationError("adc_within_ramp",
                            "adc_start_time_s + num_adc_samples/adc_sample_rate_hz exceeds "
                            "ramp_end_time_s");
    if (subframes_per_frame * subframe_period_s > frame_period_s * (1.0 + 1e-12))
      throw ValidationError("subframes_within_frame",
                            "subframes_per_frame * subframe_period_s exceeds frame_period_s");
    if (chirps_per_subframe * chirp_period_s() > subframe_period_s * (1.0 + 1e-12))
      throw ValidationError("chirps_within_subframe",
                            "chirps_per_subframe * (idle + ramp_end) exceeds subframe_period_s");
  }

  bool operator==(const ChirpConfig&) const = default;
};

struct ArrayGeometry {
  std::vector<double> tx_positions_m;
  std::vector<double> rx_positions_m;
  double wavelength_m = 0.0;

  std::size_t num_tx() const { return tx_positions_m.size(); }
  std::size_t num_rx() const { return rx_positions_m.size(); }

  /// Uniform lines starting at zero; spacings are given in wavelengths.
  static ArrayGeometry uniform(double wavelength_m, std::size_t num_tx, double tx_spacing_wl,
                               std::size_t num_rx, double rx_spacing_wl) {
    ArrayGeometry g;
    g.wavelength_m = wavelength_m;
    for (std::size_t n = 0; n < num_tx; ++n)
      g.tx_positions_m.push_back(static_cast<double>(n) * tx_spacing_wl * wavelength_m);
    for (std::size_t m = 0; m < num_rx; ++m)
      g.rx_positions_m.push_back(static_cast<double>(m) * rx_spacing_wl * wavelength_m);
    return g;
  }

  /// Three TX at lambda spacing and four RX at lambda/2.
  static ArrayGeometry default_for(const ChirpConfig& chirp) {
    return uniform(chirp.wavelength_m(), 3, 1.0, 4, 0.5);
  }

  void validate() const {
    if (tx_positions_m.empty() || rx_positions_m.empty())
      throw ValidationError("array_nonempty", "need at least one TX and one RX");
    if (!(wavelength_m > 0.0)) throw ValidationError("positive", "array.wavelength_m must be > 0");
    if (!std::is_sorted(tx_positions_m.begin(), tx_positions_m.end()) ||
        !std::is_sorted(rx_positions_m.begin(), rx_positions_m.end()))
      throw ValidationError("positions_nondecreasing", "antenna positions must be nondecreasing");
    for (double p : tx_positions_m)
      if (!std::isfinite(p)) throw ValidationError("finite", "non-finite TX position");
    for (double p : rx_positions_m)
      if (!std::isfinite(p)) throw ValidationError("finite", "non-finite RX position");
  }

  bool operator==(const ArrayGeometry&) const = default;
};

/// Overlapped transmit subarrays. Subarray p always contains its reference TX.
struct SubarrayPlan {
  std::vector<std::vector<std::uint8_t>> membership;  // P x N, 0/1
  std::vector<std::size_t> reference_tx;              // P

  std::size_t size() const { return reference_tx.size(); }
  std::size_t member_count(std::size_t p) const {
    return static_cast<std::size_t>(std::count(membership[p].begin(), membership[p].end(), 1));
  }

  static SubarrayPlan full_overlap(std::size_t num_tx, std::vector<std::size_t> refs) {
    SubarrayPlan plan;
    plan.reference_tx = std::move(refs);
    plan.membership.assign(plan.reference_tx.size(), std::vector<std::uint8_t>(num_tx, 1));
    return plan;
  }

  /// One single-element subarray per TX: plain TDM-MIMO.
  static SubarrayPlan tdm_mimo(std::size_t num_tx) {
    SubarrayPlan plan;
    for (std::size_t n = 0; n < num_tx; ++n) {
      plan.reference_tx.push_back(n);
      std::vector<std::uint8_t> row(num_tx, 0);
      row[n] = 1;
      plan.membership.push_back(std::move(row));
    }
    return plan;
  }

  /// References at the first and last TX, every TX in both subarrays.
  static SubarrayPlan default_for(std::size_t num_tx) {
    if (num_tx <= 1) return full_overlap(num_tx, {0});
    return full_overlap(num_tx, {0, num_tx - 1});
  }

  void validate(std::size_t num_tx) const {
    if (reference_tx.empty()) throw ValidationError("subarrays_nonempty", "no subarrays");
    if (membership.size() != reference_tx.size())
      throw ValidationError("subarray_shape", "membership rows must match reference count");
    for (std::size_t p = 0; p < size(); ++p) {
      if (membership[p].size() != num_tx)
        throw ValidationError("subarray_shape", "membership row " + std::to_string(p) +
                                                    " must have one entry per TX");
      for (auto v : membership[p])
        if (v > 1) throw ValidationError("subarray_shape", "membership entries must be 0/1");
      if (reference_tx[p] >= num_tx)
        throw ValidationError("reference_in_range",
                              "reference TX of subarray " + std::to_string(p) + " out of range");
      if (membership[p][reference_tx[p]] != 1)
        throw ValidationError("reference_member", "subarray " + std::to_string(p) +
                                                      " does not contain its reference TX");
    }
  }

  bool operator==(const SubarrayPlan&) const = default;
};

/// Subframe -> (subarray, steering direction) mapping.
struct TdmSchedule {
  struct Entry {
    std::size_t subarray = 0;
    double steer_rad = 0.0;
    bool operator==(const Entry&) const = default;
  };
  std::vector<Entry> entries;

  /// Every subarray once per direction, directions in the given order.
  static TdmSchedule per_direction(const std::vector<double>& directions_rad,
                                   std::size_t num_subarrays) {
    TdmSchedule s;
    for (double theta : directions_rad)
      for (std::size_t p = 0; p < num_subarrays; ++p) s.entries.push_back({p, theta});
    return s;
  }

  /// Distinct steering angles in order of first appearance.
  std::vector<double> directions() const {
    std::vector<double> out;
    for (const auto& e : entries)
      if (std::find(out.begin(), out.end(), e.steer_rad) == out.end()) out.push_back(e.steer_rad);
    return out;
  }

  std::vector<std::size_t> subframes_for_direction(std::size_t direction) const {
    const auto dirs = directions();
    if (direction >= dirs.size())
      throw DimensionError("direction " + std::to_string(direction) + " absent from schedule");
    std::vector<std::size_t> out;
    for (std::size_t s = 0; s < entries.size(); ++s)
      if (entries[s].steer_rad == dirs[direction]) out.push_back(s);
    return out;
  }

  void validate(std::uint32_t subframes_per_frame, std::size_t num_subarrays) const {
    if (entries.size() != subframes_per_frame)
      throw ValidationError("schedule_length", "schedule has " + std::to_string(entries.size()) +
                                                   " entries but subframes_per_frame is " +
                                                   std::to_string(subframes_per_frame));
    for (const auto& e : entries) {
      if (e.subarray >= num_subarrays)
        throw ValidationError("schedule_subarray", "schedule references unknown subarray " +
                                                       std::to_string(e.subarray));
      if (!std::isfinite(e.steer_rad))
        throw ValidationError("finite", "non-finite steering angle");
    }
  }

  bool operator==(const TdmSchedule&) const = default;
};

struct RadarSetup {
  ChirpConfig chirp;
  ArrayGeometry geometry;
  SubarrayPlan plan;
  TdmSchedule schedule;

  void validate() const {
    chirp.validate();
    geometry.validate();
    plan.validate(geometry.num_tx());
    schedule.validate(chirp.subframes_per_frame, plan.size());
  }

  bool operator==(const RadarSetup&) const = default;
};

/// Defaults: 77 GHz chirp, 3TX/4RX, references TX0/TX2, beams at +30 and -30 degrees.
inline RadarSetup default_setup() {
  RadarSetup s;
  s.geometry = ArrayGeometry::default_for(s.chirp);
  s.plan = SubarrayPlan::default_for(s.geometry.num_tx());
  s.schedule = TdmSchedule::per_direction({deg_to_rad(30.0), deg_to_rad(-30.0)}, s.plan.size());
  return s;
}

/// Re-plans the schedule for a new set of beam directions. The subframe count
/// follows the schedule length.
inline RadarSetup with_directions(RadarSetup setup, const std::vector<double>& directions_rad) {
  setup.schedule = TdmSchedule::per_direction(directions_rad, setup.plan.size());
  setup.chirp.subframes_per_frame = static_cast<std::uint32_t>(setup.schedule.entries.size());
  return setup;
}

/// Detection-mode setup: one TX per subframe, no analog steering.
inline RadarSetup tdm_mimo_setup(RadarSetup setup) {
  setup.plan = SubarrayPlan::tdm_mimo(setup.geometry.num_tx());
  setup.schedule = TdmSchedule::per_direction({0.0}, setup.plan.size());
  setup.chirp.subframes_per_frame = static_cast<std::uint32_t>(setup.schedule.entries.size());
  return setup;
}

// ---------------------------------------------------------------------------
// Document layer
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view token) {
  const std::string t = trim(token);
  double v = 0.0;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  if (!t.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || t.empty()) return std::nullopt;
  return v;
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

/// Degree string that converts back to exactly `rad`, when one exists nearby.
inline std::string format_degrees(double rad) {
  double deg = rad_to_deg(rad);
  for (int ulps = 0; ulps < 64; ++ulps) {
    for (int sign : {1, -1}) {
      double d = deg;
      for (int i = 0; i < ulps; ++i) d = std::nextafter(d, sign > 0 ? HUGE_VAL : -HUGE_VAL);
      if (deg_to_rad(d) == rad) return format_double(d);
    }
  }
  return format_double(deg);
}

}  // namespace detail

/// Flat `[section]` / `key = value` document.
class ConfigDocument {
 public:
  ConfigDocument() = default;

  static ConfigDocument parse(std::string_view text) {
    ConfigDocument doc;
    std::istringstream in{std::string(text)};
    boost::property_tree::ptree tree;
    try {
      boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ParseError("line " + std::to_string(e.line()), e.message());
    }
    for (const auto& [section, body] : tree) {
      if (body.empty() && !body.data().empty())
        throw ParseError(section, "key outside of a [section]");
      auto& dest = doc.sections_[section];
      for (const auto& [key, value] : body) {
        if (!value.empty()) throw ParseError(section + "." + key, "nested value");
        dest[key] = detail::trim(value.data());
      }
    }
    return doc;
  }

  bool has_section(const std::string& section) const { return sections_.count(section) > 0; }

  std::vector<std::string> section_names() const {
    std::vector<std::string> out;
    for (const auto& [name, _] : sections_) out.push_back(name);
    return out;
  }

  std::optional<std::string> get(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    if (s == sections_.end()) return std::nullopt;
    auto k = s->second.find(key);
    if (k == s->second.end()) return std::nullopt;
    return k->second;
  }

  void set(const std::string& section, const std::string& key, std::string value) {
    sections_[section][key] = std::move(value);
  }

  double get_double(const std::string& section, const std::string& key, double fallback) const {
    auto raw = get(section, key);
    if (!raw) return fallback;
    auto v = detail::parse_double(*raw);
    if (!v) throw ParseError(section + "." + key, "expected a number, got '" + *raw + "'");
    return *v;
  }

  std::optional<double> find_double(const std::string& section, const std::string& key) const {
    if (!get(section, key)) return std::nullopt;
    return get_double(section, key, 0.0);
  }

  std::uint32_t get_uint(const std::string& section, const std::string& key,
                         std::uint32_t fallback) const {
    auto raw = get(section, key);
    if (!raw) return fallback;
    const std::string t = detail::trim(*raw);
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty() || v > UINT32_MAX)
      throw ParseError(section + "." + key, "expected a non-negative integer, got '" + *raw + "'");
    return static_cast<std::uint32_t>(v);
  }

  bool get_bool(const std::string& section, const std::string& key, bool fallback) const {
    auto raw = get(section, key);
    if (!raw) return fallback;
    if (*raw == "true" || *raw == "1" || *raw == "yes") return true;
    if (*raw == "false" || *raw == "0" || *raw == "no") return false;
    throw ParseError(section + "." + key, "expected true/false, got '" + *raw + "'");
  }

  std::optional<std::vector<double>> get_list(const std::string& section,
                                               const std::string& key) const {
    auto raw = get(section, key);
    if (!raw) return std::nullopt;
    std::vector<double> out;
    if (detail::trim(*raw).empty()) return out;
    for (const auto& tok : detail::split(*raw, ',')) {
      auto v = detail::parse_double(tok);
      if (!v) throw ParseError(section + "." + key, "bad list element '" + tok + "'");
      out.push_back(*v);
    }
    return out;
  }

  /// Rejects keys not in `allowed` so that typos surface as parse errors.
  void require_known_keys(const std::string& section,
                          std::initializer_list<std::string_view> allowed) const {
    auto s = sections_.find(section);
    if (s == sections_.end()) return;
    for (const auto& [key, _] : s->second)
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
        throw ParseError(section + "." + key, "unknown key");
  }

  /// `PREFIX<SECTION>_<KEY>=value` overrides, section matched case-insensitively.
  void apply_env_overrides(std::string_view prefix = "PMV_") {
    for (char** env = environ; env && *env; ++env) {
      std::string_view entry(*env);
      if (entry.substr(0, prefix.size()) != prefix) continue;
      const auto eq = entry.find('=');
      if (eq == std::string_view::npos) continue;
      std::string name(entry.substr(prefix.size(), eq - prefix.size()));
      const std::string value(entry.substr(eq + 1));
      const auto us = name.find('_');
      if (us == std::string::npos) continue;
      std::string section = name.substr(0, us);
      std::string key = name.substr(us + 1);
      std::transform(section.begin(), section.end(), section.begin(), ::tolower);
      std::transform(key.begin(), key.end(), key.begin(), ::tolower);
      set(section, key, value);
    }
  }

  std::string to_string() const {
    std::ostringstream out;
    bool first = true;
    for (const auto& [section, body] : sections_) {
      if (!first) out << '\n';
      first = false;
      out << '[' << section << "]\n";
      for (const auto& [key, value] : body) out << key << " = " << value << '\n';
    }
    return out.str();
  }

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

inline RadarSetup setup_from_document(const ConfigDocument& doc) {
  doc.require_known_keys("chirp", {"start_frequency_hz", "slope_hz_per_s", "idle_time_s",
                                   "tx_start_time_s", "adc_start_time_s", "num_adc_samples",
                                   "adc_sample_rate_hz", "ramp_end_time_s", "subframes_per_frame",
                                   "chirps_per_subframe", "subframe_period_s", "frame_period_s",
                                   "slow_time_rate_hz"});
  doc.require_known_keys("array", {"num_tx", "num_rx", "tx_spacing_wavelengths",
                                   "rx_spacing_wavelengths", "tx_positions_m", "rx_positions_m"});
  doc.require_known_keys("subarrays", {"reference_tx", "membership"});
  doc.require_known_keys("schedule", {"directions_deg", "entries"});

  RadarSetup s;
  ChirpConfig& c = s.chirp;
  const ChirpConfig d{};
  c.start_frequency_hz = doc.get_double("chirp", "start_frequency_hz", d.start_frequency_hz);
  c.slope_hz_per_s = doc.get_double("chirp", "slope_hz_per_s", d.slope_hz_per_s);
  c.idle_time_s = doc.get_double("chirp", "idle_time_s", d.idle_time_s);
  c.tx_start_time_s = doc.get_double("chirp", "tx_start_time_s", d.tx_start_time_s);
  c.adc_start_time_s = doc.get_double("chirp", "adc_start_time_s", d.adc_start_time_s);
  c.num_adc_samples = doc.get_uint("chirp", "num_adc_samples", d.num_adc_samples);
  c.adc_sample_rate_hz = doc.get_double("chirp", "adc_sample_rate_hz", d.adc_sample_rate_hz);
  c.ramp_end_time_s = doc.get_double("chirp", "ramp_end_time_s", d.ramp_end_time_s);
  c.chirps_per_subframe = doc.get_uint("chirp", "chirps_per_subframe", d.chirps_per_subframe);
  c.subframe_period_s = doc.get_double("chirp", "subframe_period_s", d.subframe_period_s);
  c.frame_period_s = doc.get_double("chirp", "frame_period_s", d.frame_period_s);
  const bool explicit_subframes = doc.get("chirp", "subframes_per_frame").has_value();
  c.subframes_per_frame = doc.get_uint("chirp", "subframes_per_frame", d.subframes_per_frame);
  c.validate();
  if (auto fs = doc.find_double("chirp", "slow_time_rate_hz")) {
    if (std::abs(*fs - c.slow_time_rate_hz()) > 1e-9 * c.slow_time_rate_hz())
      throw ValidationError("slow_time_rate",
                            "slow_time_rate_hz must equal 1/frame_period_s (" +
                                detail::format_double(c.slow_time_rate_hz()) + ")");
  }

  // Geometry.
  const double lambda = c.wavelength_m();
  const auto num_tx = doc.get_uint("array", "num_tx", 3);
  const auto num_rx = doc.get_uint("array", "num_rx", 4);
  s.geometry = ArrayGeometry::uniform(lambda, num_tx,
                                      doc.get_double("array", "tx_spacing_wavelengths", 1.0),
                                      num_rx,
                                      doc.get_double("array", "rx_spacing_wavelengths", 0.5));
  if (auto tx = doc.get_list("array", "tx_positions_m")) s.geometry.tx_positions_m = *tx;
  if (auto rx = doc.get_list("array", "rx_positions_m")) s.geometry.rx_positions_m = *rx;
  s.geometry.validate();

  // Subarrays.
  const std::size_t n_tx = s.geometry.num_tx();
  s.plan = SubarrayPlan::default_for(n_tx);
  if (auto refs = doc.get_list("subarrays", "reference_tx")) {
    std::vector<std::size_t> r;
    for (double v : *refs) {
      if (v < 0 || v != std::floor(v))
        throw ParseError("subarrays.reference_tx", "indices must be non-negative integers");
      r.push_back(static_cast<std::size_t>(v));
    }
    s.plan = SubarrayPlan::full_overlap(n_tx, r);
  }
  if (auto mem = doc.get("subarrays", "membership")) {
    s.plan.membership.clear();
    for (const auto& row : detail::split(*mem, ',')) {
      std::vector<std::uint8_t> bits;
      for (char ch : row) {
        if (ch != '0' && ch != '1')
          throw ParseError("subarrays.membership", "rows must be strings of 0/1");
        bits.push_back(static_cast<std::uint8_t>(ch - '0'));
      }
      s.plan.membership.push_back(std::move(bits));
    }
  }
  s.plan.validate(n_tx);

  // Schedule. Explicit entries win over a direction list; without either the
  // default +30/-30 plan is truncated to fit the subframe count.
  if (auto entries = doc.get("schedule", "entries")) {
    for (const auto& tok : detail::split(*entries, ',')) {
      const auto at = tok.find('@');
      if (at == std::string::npos)
        throw ParseError("schedule.entries", "entries are 'subarray@degrees', got '" + tok + "'");
      auto p = detail::parse_double(tok.substr(0, at));
      auto deg = detail::parse_double(tok.substr(at + 1));
      if (!p || !deg || *p < 0 || *p != std::floor(*p))
        throw ParseError("schedule.entries", "bad entry '" + tok + "'");
      s.schedule.entries.push_back({static_cast<std::size_t>(*p), deg_to_rad(*deg)});
    }
  } else {
    std::vector<double> dirs;
    if (auto list = doc.get_list("schedule", "directions_deg")) {
      for (double deg : *list) dirs.push_back(deg_to_rad(deg));
    } else {
      const std::size_t n_dirs =
          s.plan.size() ? std::max<std::size_t>(1, c.subframes_per_frame / s.plan.size()) : 1;
      const double defaults[] = {30.0, -30.0};
      for (std::size_t i = 0; i < n_dirs; ++i) dirs.push_back(deg_to_rad(defaults[i % 2]));
    }
    s.schedule = TdmSchedule::per_direction(dirs, s.plan.size());
  }
  if (!explicit_subframes)
    c.subframes_per_frame = static_cast<std::uint32_t>(s.schedule.entries.size());
  s.validate();
  return s;
}

/// Parses and validates a configuration document; missing keys take the defaults.
inline RadarSetup load_config(std::string_view text) {
  return setup_from_document(ConfigDocument::parse(text));
}

/// Emits every key, shortest round-trip number formatting.
inline ConfigDocument to_document(const RadarSetup& s) {
  using detail::format_double;
  ConfigDocument doc;
  const auto& c = s.chirp;
  doc.set("chirp", "start_frequency_hz", format_double(c.start_frequency_hz));
  doc.set("chirp", "slope_hz_per_s", format_double(c.slope_hz_per_s));
  doc.set("chirp", "idle_time_s", format_double(c.idle_time_s));
  doc.set("chirp", "tx_start_time_s", format_double(c.tx_start_time_s));
  doc.set("chirp", "adc_start_time_s", format_double(c.adc_start_time_s));
  doc.set("chirp", "num_adc_samples", std::to_string(c.num_adc_samples));
  doc.set("chirp", "adc_sample_rate_hz", format_double(c.adc_sample_rate_hz));
  doc.set("chirp", "ramp_end_time_s", format_double(c.ramp_end_time_s));
  doc.set("chirp", "subframes_per_frame", std::to_string(c.subframes_per_frame));
  doc.set("chirp", "chirps_per_subframe", std::to_string(c.chirps_per_subframe));
  doc.set("chirp", "subframe_period_s", format_double(c.subframe_period_s));
  doc.set("chirp", "frame_period_s", format_double(c.frame_period_s));

  auto join = [](const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + format_double(v[i]);
    return out;
  };
  doc.set("array", "tx_positions_m", join(s.geometry.tx_positions_m));
  doc.set("array", "rx_positions_m", join(s.geometry.rx_positions_m));

  std::string refs, mem;
  for (std::size_t p = 0; p < s.plan.size(); ++p) {
    refs += (p ? ", " : "") + std::to_string(s.plan.reference_tx[p]);
    mem += p ? ", " : "";
    for (auto b : s.plan.membership[p]) mem += static_cast<char>('0' + b);
  }
  doc.set("subarrays", "reference_tx", refs);
  doc.set("subarrays", "membership", mem);

  std::string entries;
  for (std::size_t i = 0; i < s.schedule.entries.size(); ++i) {
    const auto& e = s.schedule.entries[i];
    entries += (i ? ", " : "") + std::to_string(e.subarray) + "@" +
               detail::format_degrees(e.steer_rad);
  }
  doc.set("schedule", "entries", entries);
  return doc;
}

inline std::string serialize_config(const RadarSetup& s) { return to_document(s).to_string(); }

}  // namespace pmv
