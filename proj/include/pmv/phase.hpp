#pragma once

// Slow-time phase recovery: DC-offset removal by circle fit, DACM phase
// accumulation and drift calibration.

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "pmv/core/constants.hpp"
#include "pmv/core/error.hpp"
#include "pmv/core/series.hpp"

namespace pmv {

struct CircleFit {
  cd center{};
  double radius = 0.0;
  double residual_rms = 0.0;
};

/// Algebraic (Kasa) circle fit: least squares on x^2 + y^2 + D x + E y + F = 0.
/// With `geometric_refine` the result seeds a few Gauss-Newton steps on the
/// orthogonal distances.
inline CircleFit fit_circle(const std::vector<cd>& z, bool geometric_refine = false) {
  const auto n = static_cast<Eigen::Index>(z.size());
  if (n < 3) throw DegenerateFitError("circle fit needs at least 3 samples");
  cd mean{};
  for (const auto& v : z) mean += v;
  mean /= static_cast<double>(n);
  double scale = 0.0;
  for (const auto& v : z) scale = std::max(scale, std::abs(v - mean));
  if (!(scale > 0.0)) throw DegenerateFitError("all samples coincide");

  Eigen::MatrixXd A(n, 3);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const cd u = (z[static_cast<std::size_t>(i)] - mean) / scale;
    A(i, 0) = u.real();
    A(i, 1) = u.imag();
    A(i, 2) = 1.0;
    b(i) = -std::norm(u);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  qr.setThreshold(1e-10);
  if (qr.rank() < 3) throw DegenerateFitError("samples are collinear");
  const Eigen::Vector3d sol = qr.solve(b);
  const cd c_u{-sol(0) / 2.0, -sol(1) / 2.0};
  const double r2 = std::norm(c_u) - sol(2);
  if (!(r2 > 0.0) || !std::isfinite(r2)) throw DegenerateFitError("non-positive radius");

  CircleFit fit;
  fit.center = mean + scale * c_u;
  fit.radius = scale * std::sqrt(r2);

  if (geometric_refine) {
    double cx = fit.center.real(), cy = fit.center.imag(), r = fit.radius;
    for (int it = 0; it < 20; ++it) {
      Eigen::MatrixXd J(n, 3);
      Eigen::VectorXd res(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const cd d = z[static_cast<std::size_t>(i)] - cd(cx, cy);
        const double dist = std::max(std::abs(d), 1e-300);
        res(i) = dist - r;
        J(i, 0) = -d.real() / dist;
        J(i, 1) = -d.imag() / dist;
        J(i, 2) = -1.0;
      }
      const Eigen::Vector3d step = J.colPivHouseholderQr().solve(-res);
      cx += step(0);
      cy += step(1);
      r += step(2);
      if (step.norm() < 1e-14 * (1.0 + r)) break;
    }
    fit.center = {cx, cy};
    fit.radius = std::abs(r);
  }

  double ss = 0.0;
  for (const auto& v : z) {
    const double e = std::abs(v - fit.center) - fit.radius;
    ss += e * e;
  }
  fit.residual_rms = std::sqrt(ss / static_cast<double>(n));
  return fit;
}

/// Fits the I/Q constellation and moves its center to the origin.
inline std::pair<SlowTimeSeries, CircleFit> dc_offset_correct(const SlowTimeSeries& series,
                                                              bool geometric_refine = false) {
  const CircleFit fit = fit_circle(series.samples, geometric_refine);
  SlowTimeSeries out = series;
  for (auto& v : out.samples) v -= fit.center;
  return {std::move(out), fit};
}

/// DACM: phi(0) = atan2(I, R), then
/// dphi(l) = (R[l](I[l] - I[l-1]) - (R[l] - R[l-1]) I[l]) / (R[l]^2 + I[l]^2).
/// A zero-magnitude sample repeats the previous increment; its index is
/// appended to `flagged` when provided.
inline PhaseSeries dacm_phase(const SlowTimeSeries& series,
                              std::vector<std::size_t>* flagged = nullptr) {
  const auto& z = series.samples;
  if (z.size() < 2) throw DimensionError("dacm_phase needs at least 2 samples");
  if (z[0] == cd{}) throw DimensionError("dacm_phase: first sample is zero");
  PhaseSeries out;
  out.sample_rate_hz = series.sample_rate_hz;
  out.values.resize(z.size());
  out.values[0] = std::atan2(z[0].imag(), z[0].real());
  double prev = 0.0;
  for (std::size_t l = 1; l < z.size(); ++l) {
    const double R = z[l].real(), I = z[l].imag();
    const double dR = R - z[l - 1].real(), dI = I - z[l - 1].imag();
    const double mag2 = R * R + I * I;
    double d = prev;
    if (mag2 > 0.0) {
      d = (R * dI - dR * I) / mag2;
    } else if (flagged) {
      flagged->push_back(l);
    }
    out.values[l] = out.values[l - 1] + d;
    prev = d;
  }
  return out;
}

/// Wrapped four-quadrant phase per sample, for comparison with DACM.
inline PhaseSeries arctan_phase(const SlowTimeSeries& series) {
  PhaseSeries out;
  out.sample_rate_hz = series.sample_rate_hz;
  for (const auto& v : series.samples) out.values.push_back(std::atan2(v.imag(), v.real()));
  return out;
}

/// Scans from the fourth sample. When |phi(l) - phi(l-1)| exceeds `threshold`,
/// phi(l) becomes the quadratic Lagrange extrapolation
/// phi(l-3) - 3 phi(l-2) + 3 phi(l-1), and the same correction is carried to
/// every later sample so that the jump is removed rather than re-detected.
inline PhaseSeries drift_calibrate(const PhaseSeries& phase, double threshold = 1.5,
                                   std::vector<std::size_t>* corrected = nullptr) {
  if (phase.size() < 4) throw DimensionError("drift_calibrate needs at least 4 samples");
  PhaseSeries out = phase;
  auto& p = out.values;
  double offset = 0.0;
  for (std::size_t l = 3; l < p.size(); ++l) {
    p[l] += offset;
    if (std::abs(p[l] - p[l - 1]) > threshold) {
      const double predicted = p[l - 3] - 3.0 * p[l - 2] + 3.0 * p[l - 1];
      offset += predicted - p[l];
      p[l] = predicted;
      if (corrected) corrected->push_back(l);
    }
  }
  return out;
}

}  // namespace pmv
