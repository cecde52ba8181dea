#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <sstream>
#include <vector>

#include "tracktime/detectors.hpp"
#include "tracktime/error.hpp"
#include "tracktime/grid.hpp"
#include "tracktime/observables.hpp"

namespace tracktime {

/// One collapsed branch of the passage-detector ensemble.
struct ClickSample {
  double t_a = 0.0;
  /// Quadrature weight times P(t_a | E_a).
  double weight = 0.0;
  WaveFunction collapsed_state;
  /// P(E_b | t_a).
  double transmittance = 0.0;
  /// P(t_b | E_b, t_a); absent for branches that never reach B.
  std::optional<ClickDensity> arrival;
  /// Cached Q-averages of the collapsed state.
  std::optional<MomentumMoments> moments;
};

namespace detail {

inline double total_weight(const std::vector<ClickSample>& samples) {
  if (samples.empty()) throw Error(ErrorCode::empty_ensemble, "no click samples");
  double w = 0.0;
  for (const auto& s : samples) {
    if (!(s.weight >= 0.0)) throw Error(ErrorCode::precondition, "negative sample weight");
    w += s.weight;
  }
  if (!(w > 0.0)) throw Error(ErrorCode::empty_ensemble, "click samples carry no weight");
  return w;
}

inline MomentumMoments sample_moments(const ClickSample& s) {
  return s.moments ? *s.moments : momentum_moments(s.collapsed_state);
}

/// Linear interpolation of (t, f) at x; zero outside the sampled range.
inline double interpolate(const std::vector<double>& t, const std::vector<double>& f, double x) {
  if (t.empty() || x < t.front() || x > t.back()) return 0.0;
  const auto it = std::upper_bound(t.begin(), t.end(), x);
  if (it == t.end()) return f.back();
  const auto i = static_cast<std::size_t>(it - t.begin());
  if (i == 0) return f.front();
  const double u = (x - t[i - 1]) / (t[i] - t[i - 1]);
  return (1.0 - u) * f[i - 1] + u * f[i];
}

}  // namespace detail

struct DqMomentum {
  double mean = 0.0;
  /// Square root of DQ[p^2 - (DQp)^2].
  double delta = 0.0;
};

/// Double average over click times (D) of the quantum averages (Q) of the
/// collapsed states.
inline DqMomentum dq_momentum_stats(const std::vector<ClickSample>& samples) {
  const double w_total = detail::total_weight(samples);
  double first = 0.0;
  double second = 0.0;
  for (const auto& s : samples) {
    if (s.weight == 0.0) continue;
    const auto m = detail::sample_moments(s);
    first += s.weight * m.mean;
    second += s.weight * m.second_moment;
  }
  first /= w_total;
  second /= w_total;
  return {first, std::sqrt(std::max(0.0, second - first * first))};
}

/// P(E_b | E_a) = sum_i w_i P(E_b | t_a,i), for weights summing to one
/// (the sum is divided by the total weight).
inline double p_b_given_a(const std::vector<ClickSample>& samples) {
  const double w_total = detail::total_weight(samples);
  double acc = 0.0;
  for (const auto& s : samples) acc += s.weight * s.transmittance;
  return acc / w_total;
}

struct TraversalResult {
  std::vector<double> tau_grid;
  std::vector<double> density;
  double mean_tau = 0.0;
  double p_b_given_a = 0.0;
  /// Fraction of the arrival mass that fell on tau_grid before renormalizing.
  double coverage = 0.0;
  /// Branches that entered the accumulation.
  std::size_t included = 0;
};

/// Arrival mass outside tau_grid above which the grid is rejected.
inline constexpr double kTauCoverageTolerance = 1e-3;

/// P(tau | E_b) = sum_i w_i T_i P(t_a,i + tau | E_b, t_a,i) / sum_i w_i T_i
/// on tau_grid, renormalized there, and its mean.  Branches whose
/// transmittance is below `min_transmittance` or that carry no arrival density
/// are excluded.
inline TraversalResult traversal_distribution(const std::vector<ClickSample>& samples,
                                              const std::vector<double>& tau_grid,
                                              double min_transmittance = kMinTransmittance) {
  if (tau_grid.size() < 2) throw Error(ErrorCode::precondition, "tau grid needs >= 2 points");
  TraversalResult out;
  out.tau_grid = tau_grid;
  out.density.assign(tau_grid.size(), 0.0);
  out.p_b_given_a = p_b_given_a(samples);

  double denom = 0.0;
  for (const auto& s : samples) {
    if (!s.arrival || s.weight == 0.0 || !(s.transmittance >= min_transmittance)) continue;
    const double c = s.weight * s.transmittance;
    const auto& arr = *s.arrival;
    for (std::size_t k = 0; k < tau_grid.size(); ++k) {
      out.density[k] += c * detail::interpolate(arr.times, arr.density, s.t_a + tau_grid[k]);
    }
    denom += c;
    ++out.included;
  }
  if (out.included == 0 || !(denom > 0.0)) {
    throw Error(ErrorCode::all_reflected, "no branch reaches the arrival detector");
  }
  for (auto& d : out.density) d /= denom;

  out.coverage = trapezoid(tau_grid, out.density);
  if (!(out.coverage > 1.0 - kTauCoverageTolerance)) {
    std::ostringstream msg;
    msg << "only " << out.coverage << " of the arrival mass lies on the tau grid";
    throw Error(ErrorCode::tau_grid_coverage, msg.str());
  }
  for (auto& d : out.density) d /= out.coverage;

  std::vector<double> first(tau_grid.size());
  for (std::size_t k = 0; k < tau_grid.size(); ++k) first[k] = tau_grid[k] * out.density[k];
  out.mean_tau = trapezoid(tau_grid, first);
  return out;
}

/// First time after the flux peak at the probe where |J| drops below
/// `rel_threshold` of the peak.  Returns the last recorded time if it never
/// does.
inline double select_t_c(const DetectionSeries& series, double a, double rel_threshold = 1e-6) {
  const FluxProbe* probe = series.probe(a);
  if (!probe) throw Error(ErrorCode::precondition, "no flux probe at the incident point");
  const auto& j = probe->values;
  const auto peak_it = std::max_element(j.begin(), j.end());
  const double peak = *peak_it;
  for (auto it = peak_it; it != j.end(); ++it) {
    if (std::abs(*it) < rel_threshold * peak) {
      return series.times[static_cast<std::size_t>(it - j.begin())];
    }
  }
  return series.times.back();
}

namespace detail {

/// First moment of J(t) over times <= t_max.
inline double flux_mean_time(const std::vector<double>& t, const std::vector<double>& j,
                             double t_max) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 1; i < t.size() && t[i] <= t_max; ++i) {
    const double h = 0.5 * (t[i] - t[i - 1]);
    num += h * (t[i] * j[i] + t[i - 1] * j[i - 1]);
    den += h * (j[i] + j[i - 1]);
  }
  if (!(den > 0.0)) {
    throw Error(ErrorCode::nonpositive_denominator, "flux integral is not positive");
  }
  return num / den;
}

}  // namespace detail

/// Difference of the mean outgoing time at b and the mean incident time at
/// a (incident flux integrated up to t_c, outgoing over the whole record).
inline double tau_T(const DetectionSeries& incident, double a, const DetectionSeries& outgoing,
                    double b, double t_c) {
  const FluxProbe* pa = incident.probe(a);
  const FluxProbe* pb = outgoing.probe(b);
  if (!pa || !pb) throw Error(ErrorCode::precondition, "missing flux probe for tau_T");
  const double t_in = detail::flux_mean_time(incident.times, pa->values, t_c);
  const double t_out =
      detail::flux_mean_time(outgoing.times, pb->values, outgoing.times.back());
  return t_out - t_in;
}

}  // namespace tracktime
