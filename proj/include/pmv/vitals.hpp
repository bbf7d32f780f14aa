#pragma once

// Butterworth band separation, windowed spectral-peak BR/HR estimation and
// error metrics.

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pmv/core/constants.hpp"
#include "pmv/core/error.hpp"
#include "pmv/core/fft.hpp"
#include "pmv/core/series.hpp"

namespace pmv {

struct BandpassSpec {
  double low_hz = 0.1;
  double high_hz = 0.5;
  int order = 4;  // total order of the bandpass, even

  static BandpassSpec breathing() { return {0.1, 0.5, 4}; }
  static BandpassSpec heartbeat() { return {0.8, 2.0, 4}; }

  void validate(double fs) const {
    if (!(low_hz > 0.0 && low_hz < high_hz && high_hz < fs / 2.0))
      throw ValidationError("bandpass_cutoffs", "need 0 < low < high < fs/2 (fs = " +
                                                    std::to_string(fs) + " Hz)");
    if (order < 2 || order % 2 != 0)
      throw ValidationError("bandpass_order", "order must be even and >= 2");
  }
};

/// Second-order section b0 b1 b2 / 1 a1 a2.
struct Biquad {
  double b0, b1, b2, a1, a2;
};

/// Digital Butterworth bandpass: analog prototype of order/2, lowpass-to-bandpass
/// transform at prewarped edges, bilinear transform. Each section holds one
/// conjugate pole pair and zeros at +1 and -1; the overall gain sits in the first.
inline std::vector<Biquad> design_butterworth_bandpass(const BandpassSpec& spec, double fs) {
  spec.validate(fs);
  const int n = spec.order / 2;
  const double w1 = 2.0 * fs * std::tan(kPi * spec.low_hz / fs);
  const double w2 = 2.0 * fs * std::tan(kPi * spec.high_hz / fs);
  const double bw = w2 - w1;
  const double w0 = std::sqrt(w1 * w2);

  std::vector<cd> poles_bp;
  for (int i = 0; i < n; ++i) {
    const double m = -n + 1 + 2 * i;
    const cd p = -std::polar(1.0, kPi * m / (2.0 * n));
    const cd pl = p * bw / 2.0;
    const cd root = std::sqrt(pl * pl - w0 * w0);
    poles_bp.push_back(pl + root);
    poles_bp.push_back(pl - root);
  }
  // Analog gain bw^n with n zeros at the origin; bilinear maps them to +1 and
  // the n zeros at infinity to -1.
  const double fs2 = 2.0 * fs;
  cd num = std::pow(cd(fs2), n);
  cd den = 1.0;
  std::vector<cd> pz;
  for (const auto& p : poles_bp) {
    den *= fs2 - p;
    pz.push_back((fs2 + p) / (fs2 - p));
  }
  double gain = std::pow(bw, n) * (num / den).real();

  // Keep the upper-half-plane member of each conjugate pair.
  std::vector<cd> upper;
  for (const auto& p : pz)
    if (p.imag() > 0.0) upper.push_back(p);
  std::sort(upper.begin(), upper.end(),
            [](const cd& a, const cd& b) { return std::abs(a) < std::abs(b); });
  if (upper.size() != static_cast<std::size_t>(n))
    throw Error("butterworth design: unexpected real poles");

  std::vector<Biquad> sos;
  for (std::size_t i = 0; i < upper.size(); ++i) {
    const double g = i == 0 ? gain : 1.0;
    sos.push_back({g, 0.0, -g, -2.0 * upper[i].real(), std::norm(upper[i])});
  }
  return sos;
}

/// Magnitude response at `f_hz`.
inline double sos_magnitude(const std::vector<Biquad>& sos, double f_hz, double fs) {
  const cd z1 = std::polar(1.0, -kTwoPi * f_hz / fs);
  cd h = 1.0;
  for (const auto& s : sos)
    h *= (s.b0 + s.b1 * z1 + s.b2 * z1 * z1) / (1.0 + s.a1 * z1 + s.a2 * z1 * z1);
  return std::abs(h);
}

/// Attenuation in dB of the forward-backward (zero-phase) application.
inline double zero_phase_attenuation_db(const std::vector<Biquad>& sos, double f_hz, double fs) {
  return -40.0 * std::log10(sos_magnitude(sos, f_hz, fs));
}

/// Transfer function coefficients (b, a) obtained by multiplying the sections.
inline std::pair<std::vector<double>, std::vector<double>> sos_to_tf(
    const std::vector<Biquad>& sos) {
  std::vector<double> b{1.0}, a{1.0};
  auto mul = [](const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> r(x.size() + y.size() - 1, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i)
      for (std::size_t j = 0; j < y.size(); ++j) r[i + j] += x[i] * y[j];
    return r;
  };
  for (const auto& s : sos) {
    b = mul(b, {s.b0, s.b1, s.b2});
    a = mul(a, {1.0, s.a1, s.a2});
  }
  return {b, a};
}

/// Transposed direct form II; `zi` holds two states per section and is updated.
inline std::vector<double> sosfilt(const std::vector<Biquad>& sos, std::span<const double> x,
                                   std::vector<double>& zi) {
  std::vector<double> y(x.begin(), x.end());
  for (std::size_t s = 0; s < sos.size(); ++s) {
    const auto& q = sos[s];
    double z0 = zi[2 * s], z1 = zi[2 * s + 1];
    for (auto& v : y) {
      const double in = v;
      const double out = q.b0 * in + z0;
      z0 = q.b1 * in - q.a1 * out + z1;
      z1 = q.b2 * in - q.a2 * out;
      v = out;
    }
    zi[2 * s] = z0;
    zi[2 * s + 1] = z1;
  }
  return y;
}

/// Steady-state states of the cascade for a unit step input.
inline std::vector<double> sosfilt_zi(const std::vector<Biquad>& sos) {
  std::vector<double> zi(2 * sos.size());
  double scale = 1.0;
  for (std::size_t s = 0; s < sos.size(); ++s) {
    const auto& q = sos[s];
    // (I - A^T) z = B for the companion matrix of [1, a1, a2].
    const double B0 = q.b1 - q.a1 * q.b0;
    const double B1 = q.b2 - q.a2 * q.b0;
    const double m00 = 1.0 + q.a1, m01 = -1.0, m10 = q.a2, m11 = 1.0;
    const double det = m00 * m11 - m01 * m10;
    zi[2 * s] = scale * (B0 * m11 - m01 * B1) / det;
    zi[2 * s + 1] = scale * (m00 * B1 - m10 * B0) / det;
    scale *= (q.b0 + q.b1 + q.b2) / (1.0 + q.a1 + q.a2);
  }
  return zi;
}

/// Zero-phase forward-backward filtering with odd extension of 3 * (2 * sections + 1)
/// samples at both ends and steady-state initial conditions.
inline std::vector<double> sosfiltfilt(const std::vector<Biquad>& sos, std::span<const double> x) {
  std::size_t ntaps = 2 * sos.size() + 1;
  std::size_t zero_b2 = 0, zero_a2 = 0;
  for (const auto& s : sos) {
    zero_b2 += s.b2 == 0.0;
    zero_a2 += s.a2 == 0.0;
  }
  ntaps -= std::min(zero_b2, zero_a2);
  const std::size_t edge = 3 * ntaps;
  if (x.size() <= edge)
    throw DimensionError("sosfiltfilt: input length " + std::to_string(x.size()) +
                         " must exceed padding " + std::to_string(edge));
  const std::size_t n = x.size();
  std::vector<double> ext;
  ext.reserve(n + 2 * edge);
  for (std::size_t i = edge; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= edge; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  const auto zi0 = sosfilt_zi(sos);
  std::vector<double> zi(zi0.size());
  for (std::size_t i = 0; i < zi.size(); ++i) zi[i] = zi0[i] * ext.front();
  auto y = sosfilt(sos, ext, zi);
  std::reverse(y.begin(), y.end());
  for (std::size_t i = 0; i < zi.size(); ++i) zi[i] = zi0[i] * y.front();
  y = sosfilt(sos, y, zi);
  std::reverse(y.begin(), y.end());
  return std::vector<double>(y.begin() + static_cast<std::ptrdiff_t>(edge),
                             y.end() - static_cast<std::ptrdiff_t>(edge));
}

inline PhaseSeries butterworth_bandpass(const PhaseSeries& signal, const BandpassSpec& spec) {
  const auto sos = design_butterworth_bandpass(spec, signal.sample_rate_hz);
  PhaseSeries out;
  out.sample_rate_hz = signal.sample_rate_hz;
  out.values = sosfiltfilt(sos, signal.values);
  return out;
}

/// First difference with a leading zero, so that length is preserved.
inline std::vector<double> phase_difference(std::span<const double> phi) {
  std::vector<double> d(phi.size(), 0.0);
  for (std::size_t l = 1; l < phi.size(); ++l) d[l] = phi[l] - phi[l - 1];
  return d;
}

struct SpectralOptions {
  double grid_bpm = 0.01;        // zero-padded DFT spacing
  double min_peak_db = 6.0;      // peak over in-band median
};

/// Spectral peak of a mean-removed segment within [lo_hz, hi_hz], in bpm.
/// Empty when the segment is silent, the peak is not `min_peak_db` above the
/// in-band median, or the maximum sits on a band edge.
inline std::optional<double> spectral_peak_bpm(std::span<const double> segment, double fs,
                                               double lo_hz, double hi_hz,
                                               const SpectralOptions& opt = {}) {
  if (segment.empty()) return std::nullopt;
  double mean = 0.0;
  for (double v : segment) mean += v;
  mean /= static_cast<double>(segment.size());
  std::vector<double> x(segment.size());
  bool silent = true;
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = segment[i] - mean;
    if (x[i] != 0.0) silent = false;
  }
  if (silent) return std::nullopt;

  const double df = opt.grid_bpm / 60.0;
  std::size_t nfft = static_cast<std::size_t>(std::ceil(fs / df - 1e-9));
  nfft = std::max(nfft, x.size());
  const auto spec = rfft_padded(x, nfft);
  const double bin_hz = fs / static_cast<double>(nfft);
  const auto lo = static_cast<std::size_t>(std::ceil(lo_hz / bin_hz - 1e-9));
  const auto hi = std::min(static_cast<std::size_t>(std::floor(hi_hz / bin_hz + 1e-9)),
                           spec.size() - 1);
  if (lo > hi) return std::nullopt;
  std::vector<double> mag;
  std::size_t best = lo;
  double best_mag = -1.0;
  for (std::size_t k = lo; k <= hi; ++k) {
    const double m = std::abs(spec[k]);
    mag.push_back(m);
    if (m > best_mag) {
      best_mag = m;
      best = k;
    }
  }
  if (best == lo || best == hi) return std::nullopt;
  std::nth_element(mag.begin(), mag.begin() + static_cast<std::ptrdiff_t>(mag.size() / 2),
                   mag.end());
  const double median = mag[mag.size() / 2];
  if (!(best_mag > 0.0) || 20.0 * std::log10(best_mag / std::max(median, 1e-300)) < opt.min_peak_db)
    return std::nullopt;
  return 60.0 * static_cast<double>(best) * bin_hz;
}

/// Breathing rate of an already band-limited phase window.
inline std::optional<double> estimate_br(const PhaseSeries& window,
                                         const BandpassSpec& band = BandpassSpec::breathing(),
                                         const SpectralOptions& opt = {}) {
  return spectral_peak_bpm(window.values, window.sample_rate_hz, band.low_hz, band.high_hz, opt);
}

/// Heart rate from the phase difference of a window, heartbeat-band filtered.
inline std::optional<double> estimate_hr(const PhaseSeries& window,
                                         const BandpassSpec& band = BandpassSpec::heartbeat(),
                                         const SpectralOptions& opt = {}) {
  const auto sos = design_butterworth_bandpass(band, window.sample_rate_hz);
  const auto filtered = sosfiltfilt(sos, phase_difference(window.values));
  return spectral_peak_bpm(filtered, window.sample_rate_hz, band.low_hz, band.high_hz, opt);
}

struct VitalRecord {
  double window_start_s = 0.0;
  std::optional<double> br_bpm;
  std::optional<double> hr_bpm;
};

struct VitalMetrics {
  double std_bpm = std::nan("");
  double rmse_bpm = std::nan("");
  double accuracy = 0.0;
  std::size_t valid = 0;
  std::size_t windows = 0;
};

struct VitalReport {
  std::size_t target_id = 0;
  std::vector<VitalRecord> windows;
  std::optional<VitalMetrics> br_metrics;
  std::optional<VitalMetrics> hr_metrics;
};

struct VitalOptions {
  BandpassSpec br_band = BandpassSpec::breathing();
  BandpassSpec hr_band = BandpassSpec::heartbeat();
  WindowSpec window;
  SpectralOptions spectral;
};

/// Filters the whole series once (BR band on the phase, HR band on its
/// difference), then takes one spectral peak per window and vital.
inline VitalReport sliding_estimates(const PhaseSeries& phase, const VitalOptions& opt = {}) {
  const double fs = phase.sample_rate_hz;
  const std::size_t W = opt.window.window_samples(fs);
  const std::size_t step = opt.window.step_samples(fs);
  if (!(opt.window.step_s > 0.0) || step == 0)
    throw ValidationError("window_step", "window step must be > 0");
  if (W == 0 || phase.size() < W)
    throw DimensionError("sliding_estimates: " + std::to_string(phase.size()) +
                         " samples shorter than one window of " + std::to_string(W));
  const auto br_sig = sosfiltfilt(design_butterworth_bandpass(opt.br_band, fs), phase.values);
  const auto hr_sig = sosfiltfilt(design_butterworth_bandpass(opt.hr_band, fs),
                                  phase_difference(phase.values));
  VitalReport report;
  const std::size_t n = opt.window.count(phase.size(), fs);
  for (std::size_t w = 0; w < n; ++w) {
    const std::size_t s0 = w * step;
    VitalRecord r;
    r.window_start_s = static_cast<double>(s0) / fs;
    r.br_bpm = spectral_peak_bpm(std::span(br_sig).subspan(s0, W), fs, opt.br_band.low_hz,
                                 opt.br_band.high_hz, opt.spectral);
    r.hr_bpm = spectral_peak_bpm(std::span(hr_sig).subspan(s0, W), fs, opt.hr_band.low_hz,
                                 opt.hr_band.high_hz, opt.spectral);
    report.windows.push_back(r);
  }
  return report;
}

/// STD of the valid estimates, RMSE of their errors, and the fraction of all
/// windows whose error is below `tolerance_bpm` (missing estimates count as misses).
inline VitalMetrics compute_metrics(const std::vector<std::optional<double>>& estimates,
                                    const std::vector<double>& truth,
                                    double tolerance_bpm = 3.0) {
  if (estimates.size() != truth.size())
    throw EvaluationError("window grid mismatch: " + std::to_string(estimates.size()) +
                          " estimates vs " + std::to_string(truth.size()) + " truth windows");
  VitalMetrics m;
  m.windows = estimates.size();
  double sum = 0.0, sum_sq_err = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    if (!estimates[i]) continue;
    const double e = *estimates[i] - truth[i];
    ++m.valid;
    sum += *estimates[i];
    sum_sq_err += e * e;
    if (std::abs(e) < tolerance_bpm) ++hits;
  }
  if (m.valid > 0) {
    const double mean = sum / static_cast<double>(m.valid);
    double var = 0.0;
    for (const auto& e : estimates)
      if (e) var += (*e - mean) * (*e - mean);
    m.std_bpm = std::sqrt(var / static_cast<double>(m.valid));
    m.rmse_bpm = std::sqrt(sum_sq_err / static_cast<double>(m.valid));
  }
  m.accuracy = m.windows ? static_cast<double>(hits) / static_cast<double>(m.windows) : 0.0;
  return m;
}

}  // namespace pmv
