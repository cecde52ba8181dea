#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <vector>

#include "tracktime/error.hpp"
#include "tracktime/grid.hpp"
#include "tracktime/observables.hpp"
#include "tracktime/potential.hpp"
#include "tracktime/propagator.hpp"

namespace tracktime {

/// Normalized detection-time density.  For the passage detector
/// `efficiency` is the absorbed norm; for the arrival detector it is the
/// transmittance.
struct ClickDensity {
  std::vector<double> times;
  std::vector<double> density;
  double efficiency = 0.0;
  /// False when the norm was still changing at the end of the record.
  bool converged = true;
};

/// Absorbed norm below which the passage detector counts as blind.
inline constexpr double kMinEfficiency = 1e-12;
/// Tolerated upward drift of the recorded norm (round-off).
inline constexpr double kNormDriftTolerance = 1e-12;
/// The record is converged when N changes by less than this over its final 5%.
inline constexpr double kPlateauTolerance = 1e-6;

/// Trapezoid rule on a sampled function.
inline double trapezoid(const std::vector<double>& t, const std::vector<double>& f) {
  double acc = 0.0;
  for (std::size_t i = 1; i < t.size(); ++i) acc += 0.5 * (t[i] - t[i - 1]) * (f[i] + f[i - 1]);
  return acc;
}

/// Detection-time density of the passage detector from the absorption rate
/// -dN/dt, normalized over the detected ensemble.
inline ClickDensity click_density(const DetectionSeries& series) {
  if (!series.norm || series.norm->size() != series.times.size() || series.size() < 3) {
    throw Error(ErrorCode::precondition, "click density needs a norm record of >= 3 samples");
  }
  const auto& t = series.times;
  const auto& n = *series.norm;
  const std::size_t len = t.size();
  for (std::size_t i = 1; i < len; ++i) {
    if (n[i] > n[i - 1] + kNormDriftTolerance) {
      std::ostringstream msg;
      msg << "norm increases at t=" << t[i];
      throw Error(ErrorCode::precondition, msg.str());
    }
  }
  const double absorbed = n.front() - n.back();
  if (!(absorbed > kMinEfficiency)) {
    throw Error(ErrorCode::zero_absorption, "detector absorbed no probability");
  }

  ClickDensity out;
  out.times = t;
  out.density.resize(len);
  out.efficiency = absorbed;
  out.density.front() = -(n[1] - n[0]) / (t[1] - t[0]);
  out.density.back() = -(n[len - 1] - n[len - 2]) / (t[len - 1] - t[len - 2]);
  for (std::size_t i = 1; i + 1 < len; ++i) {
    out.density[i] = -(n[i + 1] - n[i - 1]) / (t[i + 1] - t[i - 1]);
  }
  for (auto& d : out.density) d = std::max(d, 0.0) / absorbed;

  const double t_tail = t.back() - 0.05 * (t.back() - t.front());
  const auto tail = std::lower_bound(t.begin(), t.end(), t_tail);
  const auto i_tail = static_cast<std::size_t>(tail - t.begin());
  out.converged = std::abs(n[i_tail] - n.back()) < kPlateauTolerance;
  return out;
}

/// Overlap (relative to s^2 N) below which collapse is refused.
inline constexpr double kMinRelativeOverlap = 1e-30;

/// State after a click of detector `det`: g psi / ||g psi||.
inline WaveFunction collapse(const WaveFunction& psi, const Detector& det) {
  WaveFunction out = psi;
  double overlap = 0.0;
  for (std::size_t j = 0; j < psi.size(); ++j) {
    out[j] *= det.window(psi.grid.x(j));
    overlap += std::norm(out[j]);
  }
  overlap -= 0.5 * (std::norm(out[0]) + std::norm(out[psi.size() - 1]));
  overlap *= psi.grid.dx;
  const double scale_ref = det.s * det.s * norm(psi);
  if (!(overlap > kMinRelativeOverlap * scale_ref) || !(overlap > 0.0)) {
    std::ostringstream msg;
    msg << "no support under detector window at a=" << det.a << " sigma=" << det.sigma;
    throw Error(ErrorCode::zero_overlap, msg.str());
  }
  const double inv = 1.0 / std::sqrt(overlap);
  for (auto& a : out.amplitudes) a *= inv;
  return out;
}

/// Arrival-time density at a probe plus the time-integrated flux.
struct ArrivalDensity {
  ClickDensity density;
  /// Integral of J(b,t) dt over the record (unclipped).
  double transmittance = 0.0;
  /// Integral of the clipped negative flux relative to the positive one.
  double clipped_fraction = 0.0;
};

/// Transmittance below which an arrival density is not formed.
inline constexpr double kMinTransmittance = 1e-14;
/// Largest tolerated backflow relative to the positive flux integral.
inline constexpr double kMaxClippedFraction = 0.01;

/// Normalized flux at b as an arrival-time density.  Negative flux samples
/// are clipped to zero and reported as `clipped_fraction`.
inline ArrivalDensity arrival_density(const DetectionSeries& series, double b,
                                      double min_transmittance = kMinTransmittance) {
  const FluxProbe* probe = series.probe(b);
  if (!probe) {
    std::ostringstream msg;
    msg << "no flux probe recorded at x=" << b;
    throw Error(ErrorCode::precondition, msg.str());
  }
  const auto& t = series.times;
  const auto& j = probe->values;
  std::vector<double> pos(j.size());
  std::vector<double> neg(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    pos[i] = std::max(j[i], 0.0);
    neg[i] = std::max(-j[i], 0.0);
  }
  const double total = trapezoid(t, j);
  const double positive = trapezoid(t, pos);
  const double negative = trapezoid(t, neg);
  if (!(total > min_transmittance) || !(positive > 0.0)) {
    std::ostringstream msg;
    msg << "integrated flux " << total << " at x=" << b << " is below " << min_transmittance;
    throw Error(ErrorCode::zero_transmission, msg.str());
  }

  ArrivalDensity out;
  out.transmittance = total;
  out.clipped_fraction = negative / positive;
  if (out.clipped_fraction > kMaxClippedFraction) {
    std::ostringstream msg;
    msg << "backflow fraction " << out.clipped_fraction << " at x=" << b;
    throw Error(ErrorCode::backflow, msg.str());
  }
  out.density.times = t;
  out.density.density.resize(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) out.density.density[i] = pos[i] / positive;
  out.density.efficiency = total;
  return out;
}

/// Flux at the end of the horizon, relative to its peak, above which the
/// horizon counts as too short.
inline constexpr double kHorizonDecay = 1e-4;

struct TransmittanceResult {
  /// Time-integrated flux at b from t_a until the flux has decayed (at most
  /// t_a + horizon).
  double probability = 0.0;
  /// Change of the probability beyond b over the same interval.
  double norm_beyond = 0.0;
  bool horizon_ok = true;
  bool boundary_contaminated = false;
  double b = 0.0;
  DetectionSeries series;
};

/// Fraction of a post-click state that reaches the arrival detector at the
/// right barrier edge.  Propagation stops once the flux at b has fallen below
/// kHorizonDecay of its peak; `t_horizon` is the upper limit.  Detector A
/// must already be switched off in `spec`.
inline TransmittanceResult transmittance(const WaveFunction& psi_at_ta, const PotentialSpec& spec,
                                         const PropagatorConfig& cfg, double t_horizon) {
  if (spec.has_absorber()) {
    throw Error(ErrorCode::precondition,
                "transmittance is evaluated with the passage detector switched off");
  }
  if (!(t_horizon > 0.0)) throw Error(ErrorCode::precondition, "horizon must be positive");
  const double b = spec.barrier_right();

  RunOptions opts;
  opts.t_end = psi_at_ta.time + t_horizon;
  opts.probes = {b};
  opts.stop_flux_decay = kHorizonDecay;
  // Before the bulk of the state could have reached b the flux there is a
  // tail that may dip and recover, so the decay test waits for the classical
  // arrival of the centroid.
  const double v = momentum_moments(psi_at_ta).mean / units::mass;
  const double gap = b - mean_position(psi_at_ta);
  if (v > 0.0 && gap > 0.0) opts.stop_not_before = psi_at_ta.time + gap / v;
  auto res = run(psi_at_ta, spec, cfg, opts);

  TransmittanceResult out;
  out.b = b;
  const auto& j = res.series.flux_probes.front().values;
  out.probability = trapezoid(res.series.times, j);
  out.norm_beyond = norm_beyond(res.state, b) - norm_beyond(psi_at_ta, b);
  out.horizon_ok = res.stopped_early;
  out.boundary_contaminated = res.boundary_contaminated;
  out.series = std::move(res.series);
  return out;
}

}  // namespace tracktime
