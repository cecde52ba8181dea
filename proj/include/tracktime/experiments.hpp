#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tracktime/detectors.hpp"
#include "tracktime/ensemble.hpp"
#include "tracktime/error.hpp"
#include "tracktime/grid.hpp"
#include "tracktime/observables.hpp"
#include "tracktime/parallel.hpp"
#include "tracktime/potential.hpp"
#include "tracktime/propagator.hpp"
#include "tracktime/spectral.hpp"

namespace tracktime {

/// One configuration of the two-detector setup.  Defaults reproduce the
/// reference setup: Gaussian at x=20 with p=8 and variance 9/4, barrier of
/// height 50 starting at x=80, passage detector at a=50, arrival detector at
/// the right barrier edge.
struct Scenario {
  GaussianPrep prep{};
  double x_min = -60.0;
  double x_max = 340.0;
  std::size_t n_points = 8001;

  double barrier_left = 80.0;
  double barrier_height = 50.0;
  double barrier_width = 1.0;
  Detector detector{50.0, 1.0, 4.5, true};

  PropagatorConfig propagator{};
  /// End of the passage-detector record.  The incident pass through A is
  /// complete before this time and the wave reflected by the barrier has not
  /// yet returned to A.
  double detection_t_end = 9.0;
  /// Number of click-time quadrature intervals (M).
  std::size_t click_intervals = 64;
  /// Click density, relative to its peak, that bounds the click-time window.
  double click_window = 1e-10;
  /// Longest propagation of a post-click branch; also the extent of tau.
  /// Branches stop earlier once the flux at b has decayed.
  double branch_horizon = 25.0;
  /// Right end of the lattice used for post-click branches.
  double branch_x_max = 340.0;
  /// End of the detector-free run used for the flux-average time.
  double tau_T_t_end = 20.0;
  /// Branches transmitting less than this are dropped from P(tau|E_b).
  double min_transmittance = kMinTransmittance;
  /// tau grid spacing in propagation steps.
  std::size_t tau_stride = 10;

  Grid grid() const { return make_grid(x_min, x_max, n_points); }
  double b() const noexcept { return barrier_left + barrier_width; }

  PotentialSpec potential(bool detector_active) const {
    PotentialSpec spec;
    spec.barrier_left = barrier_left;
    spec.barrier_width = barrier_width;
    spec.barrier_height = barrier_height;
    Detector det = detector;
    det.active = detector_active;
    spec.detectors.push_back(det);
    return spec;
  }

  std::vector<double> tau_grid() const {
    const double h = static_cast<double>(tau_stride) * propagator.dt;
    const auto n = static_cast<std::size_t>(std::floor(branch_horizon / h + 1e-9));
    std::vector<double> g(n + 1);
    for (std::size_t k = 0; k <= n; ++k) g[k] = static_cast<double>(k) * h;
    return g;
  }
};

using Logger = std::function<void(const std::string&)>;

// ---------------------------------------------------------------------------
// Click-time quadrature

/// Equally spaced record indices covering the click window, with normalized
/// trapezoid weights P(t_a|E_a) h.  The stride is even, so halving it gives a
/// refinement whose every other node is the original node set.
struct ClickNodes {
  std::vector<std::size_t> steps;
  std::vector<double> weights;
  std::size_t stride = 0;
};

inline std::vector<double> click_weights(const ClickDensity& clicks,
                                         const std::vector<std::size_t>& steps) {
  std::vector<double> w(steps.size(), 0.0);
  if (steps.size() < 2) {
    if (!w.empty()) w[0] = 1.0;
    return w;
  }
  double total = 0.0;
  for (std::size_t k = 0; k < steps.size(); ++k) {
    const double h_left = k > 0 ? clicks.times[steps[k]] - clicks.times[steps[k - 1]] : 0.0;
    const double h_right =
        k + 1 < steps.size() ? clicks.times[steps[k + 1]] - clicks.times[steps[k]] : 0.0;
    w[k] = 0.5 * (h_left + h_right) * clicks.density[steps[k]];
    total += w[k];
  }
  if (!(total > 0.0)) throw Error(ErrorCode::zero_absorption, "no click mass on the nodes");
  for (auto& x : w) x /= total;
  return w;
}

inline ClickNodes click_nodes(const ClickDensity& clicks, std::size_t intervals,
                              double rel_threshold) {
  if (intervals == 0) throw Error(ErrorCode::precondition, "need at least one click interval");
  const auto& d = clicks.density;
  const std::size_t len = d.size();
  const double peak = *std::max_element(d.begin(), d.end());
  std::size_t lo = 0;
  while (lo < len && d[lo] < rel_threshold * peak) ++lo;
  std::size_t hi = len - 1;
  while (hi > lo && d[hi] < rel_threshold * peak) --hi;

  std::size_t stride = (hi - lo + intervals - 1) / intervals;
  stride = std::max<std::size_t>(2, stride + (stride % 2));
  if (intervals * stride > len - 1) {
    throw Error(ErrorCode::precondition, "click record too short for the requested intervals");
  }
  if (lo + intervals * stride > len - 1) lo = len - 1 - intervals * stride;

  ClickNodes nodes;
  nodes.stride = stride;
  for (std::size_t k = 0; k <= intervals; ++k) nodes.steps.push_back(lo + k * stride);
  nodes.weights = click_weights(clicks, nodes.steps);
  return nodes;
}

/// Same window, half the stride.
inline ClickNodes refine(const ClickDensity& clicks, const ClickNodes& coarse) {
  ClickNodes fine;
  fine.stride = coarse.stride / 2;
  const std::size_t intervals = 2 * (coarse.steps.size() - 1);
  for (std::size_t k = 0; k <= intervals; ++k) {
    fine.steps.push_back(coarse.steps.front() + k * fine.stride);
  }
  fine.weights = click_weights(clicks, fine.steps);
  return fine;
}

// ---------------------------------------------------------------------------
// Passage detection

struct DetectionPhase {
  ClickDensity clicks;
  ClickNodes nodes;
  std::vector<ClickSample> samples;
  bool boundary_contaminated = false;
};

/// Propagates the prepared packet with detector A active, forms the click
/// density and collapses the state at each click-time node.
inline DetectionPhase run_detection(const Scenario& sc, std::size_t intervals, bool refined) {
  const Grid grid = sc.grid();
  const WaveFunction psi0 = prepare_gaussian(grid, sc.prep);
  const PotentialSpec spec = sc.potential(true);

  RunOptions first;
  first.t_end = sc.detection_t_end;
  first.record_norm = true;
  const auto record = run(psi0, spec, sc.propagator, first);

  DetectionPhase out;
  out.clicks = click_density(record.series);
  out.nodes = click_nodes(out.clicks, intervals, sc.click_window);
  if (refined) out.nodes = refine(out.clicks, out.nodes);
  out.boundary_contaminated = record.boundary_contaminated;

  RunOptions second;
  second.t_end = sc.detection_t_end;
  second.snapshot_steps = out.nodes.steps;
  auto replay = run(psi0, spec, sc.propagator, second);

  out.samples.resize(out.nodes.steps.size());
  for (std::size_t k = 0; k < out.nodes.steps.size(); ++k) {
    auto& s = out.samples[k];
    s.t_a = out.clicks.times[out.nodes.steps[k]];
    s.weight = out.nodes.weights[k];
    s.collapsed_state = collapse(replay.snapshots[k], sc.detector);
    s.moments = momentum_moments(s.collapsed_state);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Post-click branches

struct BranchOutcome {
  double transmittance = 0.0;
  double norm_beyond = 0.0;
  double clipped_fraction = 0.0;
  bool horizon_ok = true;
  bool boundary_contaminated = false;
  /// Transmittance of the part of the branch with momentum above sqrt(2 m V0).
  std::optional<double> above_barrier;
};

/// Momentum separating above-barrier from tunnelling components.
inline double barrier_momentum(const Scenario& sc) {
  return std::sqrt(2.0 * units::mass * std::max(0.0, sc.barrier_height));
}

inline WaveFunction branch_state(const Scenario& sc, const WaveFunction& collapsed) {
  return crop(collapsed, sc.x_min, sc.branch_x_max);
}

/// Propagates one post-click state with A switched off; fills the sample's
/// transmittance and arrival density.
/// Lightest above-barrier band that is propagated on its own.
inline constexpr double kBandFloor = 1e-10;

inline BranchOutcome evaluate_branch(const Scenario& sc, ClickSample& sample,
                                     bool above_barrier_check) {
  const PotentialSpec spec = sc.potential(false).without_detectors();
  const WaveFunction start = branch_state(sc, sample.collapsed_state);
  auto tr = transmittance(start, spec, sc.propagator, sc.branch_horizon);

  BranchOutcome out;
  out.transmittance = tr.probability;
  out.norm_beyond = tr.norm_beyond;
  out.horizon_ok = tr.horizon_ok;
  out.boundary_contaminated = tr.boundary_contaminated;

  sample.transmittance = std::clamp(tr.probability, 0.0, 1.0);
  sample.arrival.reset();
  if (tr.probability >= sc.min_transmittance) {
    const auto arr = arrival_density(tr.series, tr.b, sc.min_transmittance);
    out.clipped_fraction = arr.clipped_fraction;
    sample.arrival = arr.density;
  }
  if (above_barrier_check) {
    const double p_v0 = barrier_momentum(sc);
    const WaveFunction band = momentum_band(sample.collapsed_state, p_v0,
                                            std::numeric_limits<double>::infinity());
    // Collapsed states carry ~1e-17 of junk at unresolved momenta, so a band
    // this light is not a meaningful wave packet; its norm bounds the answer.
    const double band_norm = norm(band);
    if (band_norm < kBandFloor) {
      out.above_barrier = std::max(0.0, band_norm);
    } else {
      // The parent state passed the resolution guard and the band is its
      // projection, so the band's unresolved norm is bounded in absolute terms.
      PropagatorConfig cfg = sc.propagator;
      cfg.resolution_check = false;
      const auto above = transmittance(branch_state(sc, band), spec, cfg, sc.branch_horizon);
      out.above_barrier = above.probability;
    }
  }
  return out;
}

struct TraversalOptions {
  std::size_t intervals = 64;
  /// Also evaluate with 2M intervals (reusing the M nodes).
  bool refine = false;
  bool above_barrier_check = false;
  std::size_t workers = 1;
  Logger log;
};

/// Everything measured for one (barrier width, detector) configuration.
struct TraversalOutcome {
  TraversalResult result;
  std::optional<TraversalResult> refined;
  double efficiency = 0.0;
  bool click_converged = true;
  double dq_mean_p = 0.0;
  double delta_dq = 0.0;
  double max_clipped_fraction = 0.0;
  /// Largest |flux transmittance - norm transmittance| over branches.
  double max_flux_norm_mismatch = 0.0;
  bool horizon_ok = true;
  bool boundary_ok = true;
  std::size_t branches = 0;
  /// Weighted above-barrier and below-barrier transmitted probability.
  std::optional<double> above_barrier;
  std::optional<double> below_barrier;
  std::vector<ClickSample> samples;
};

namespace detail {

inline std::vector<ClickSample> coarse_subset(const std::vector<ClickSample>& fine,
                                              const ClickDensity& clicks,
                                              const ClickNodes& fine_nodes) {
  std::vector<ClickSample> coarse;
  std::vector<std::size_t> steps;
  for (std::size_t k = 0; k < fine.size(); k += 2) {
    ClickSample s = fine[k];
    s.collapsed_state = WaveFunction{};
    coarse.push_back(std::move(s));
    steps.push_back(fine_nodes.steps[k]);
  }
  const auto w = click_weights(clicks, steps);
  for (std::size_t k = 0; k < coarse.size(); ++k) coarse[k].weight = w[k];
  return coarse;
}

}  // namespace detail

/// Full two-detector pipeline for the scenario's barrier width and detector.
inline TraversalOutcome run_traversal(const Scenario& sc, const TraversalOptions& opts) {
  auto phase = run_detection(sc, opts.intervals, opts.refine);

  TraversalOutcome out;
  out.efficiency = phase.clicks.efficiency;
  out.click_converged = phase.clicks.converged;
  out.boundary_ok = !phase.boundary_contaminated;
  const auto dq = dq_momentum_stats(phase.samples);
  out.dq_mean_p = dq.mean;
  out.delta_dq = dq.delta;

  std::vector<BranchOutcome> branches(phase.samples.size());
  parallel_for(phase.samples.size(), opts.workers, [&](std::size_t i) {
    branches[i] = evaluate_branch(sc, phase.samples[i], opts.above_barrier_check);
  });

  double above = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < branches.size(); ++i) {
    const auto& br = branches[i];
    out.max_clipped_fraction = std::max(out.max_clipped_fraction, br.clipped_fraction);
    out.max_flux_norm_mismatch =
        std::max(out.max_flux_norm_mismatch, std::abs(br.transmittance - br.norm_beyond));
    out.horizon_ok = out.horizon_ok && (br.horizon_ok || br.transmittance < sc.min_transmittance);
    out.boundary_ok = out.boundary_ok && !br.boundary_contaminated;
    if (br.above_barrier) {
      above += phase.samples[i].weight * *br.above_barrier;
      total += phase.samples[i].weight * br.transmittance;
    }
    if (opts.log) {
      std::ostringstream line;
      line << "branch t_a=" << phase.samples[i].t_a << " weight=" << phase.samples[i].weight
           << " T=" << br.transmittance << " norm_T=" << br.norm_beyond
           << " clip=" << br.clipped_fraction << (br.horizon_ok ? "" : " horizon-short")
           << (br.boundary_contaminated ? " boundary" : "");
      opts.log(line.str());
    }
  }
  out.branches = branches.size();
  if (opts.above_barrier_check) {
    out.above_barrier = above;
    out.below_barrier = total - above;
  }

  const auto tau_grid = sc.tau_grid();
  if (opts.refine) {
    out.refined = traversal_distribution(phase.samples, tau_grid, sc.min_transmittance);
    out.result = traversal_distribution(
        detail::coarse_subset(phase.samples, phase.clicks, phase.nodes), tau_grid,
        sc.min_transmittance);
  } else {
    out.result = traversal_distribution(phase.samples, tau_grid, sc.min_transmittance);
  }
  out.samples = std::move(phase.samples);
  return out;
}

// ---------------------------------------------------------------------------
// Flux-average traversal time

struct TauTOutcome {
  double tau_T = 0.0;
  double t_c = 0.0;
  /// Outgoing flux at the end of the record relative to its peak.
  bool horizon_ok = true;
};

/// Detector-free run of the prepared packet with probes at a and b.
inline TauTOutcome run_tau_T(const Scenario& sc) {
  const Grid grid = sc.grid();
  const WaveFunction psi0 = prepare_gaussian(grid, sc.prep);
  const PotentialSpec spec = sc.potential(false).without_detectors();
  RunOptions opts;
  opts.t_end = sc.tau_T_t_end;
  opts.probes = {sc.detector.a, sc.b()};
  const auto res = run(psi0, spec, sc.propagator, opts);

  TauTOutcome out;
  out.t_c = select_t_c(res.series, sc.detector.a);
  out.tau_T = tau_T(res.series, sc.detector.a, res.series, sc.b(), out.t_c);
  const auto& jb = res.series.probe(sc.b())->values;
  double peak = 0.0;
  for (double v : jb) peak = std::max(peak, std::abs(v));
  out.horizon_ok = std::abs(jb.back()) <= kHorizonDecay * peak;
  return out;
}

// ---------------------------------------------------------------------------
// Sweeps

inline std::string status_of(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) return std::string(to_string(err->code()));
  return "error";
}

inline std::vector<double> log_spaced(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double u = n > 1 ? static_cast<double>(k) / static_cast<double>(n - 1) : 0.0;
    v[k] = lo * std::pow(hi / lo, u);
  }
  return v;
}

inline std::vector<double> default_sigma_values() { return log_spaced(0.2, 5.0, 13); }

inline std::vector<double> default_d_values() {
  std::vector<double> v;
  for (int k = 1; k <= 24; ++k) v.push_back(0.25 * k);
  return v;
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Figure1Row {
  double s = 0.0;
  double sigma = 0.0;
  double dq_mean_p = kNaN;
  double delta_dq = kNaN;
  double efficiency = kNaN;
  bool click_converged = false;
  std::string status = "ok";
};

struct Figure1Result {
  Scenario base;
  std::size_t intervals = 0;
  double reference_mean_p = 0.0;
  double reference_delta_p = 0.0;
  std::vector<Figure1Row> rows;
};

/// Momentum width after detection versus detector width, for each intensity.
inline Figure1Result run_figure1(const Scenario& base, const std::vector<double>& sigma_values,
                                 const std::vector<double>& s_values, std::size_t workers = 1) {
  Figure1Result out;
  out.base = base;
  out.intervals = base.click_intervals;
  const auto ref = momentum_moments(prepare_gaussian(base.grid(), base.prep));
  out.reference_mean_p = ref.mean;
  out.reference_delta_p = std::sqrt(ref.variance());

  for (double s : s_values)
    for (double sigma : sigma_values) out.rows.push_back(Figure1Row{s, sigma});

  parallel_for(out.rows.size(), workers, [&](std::size_t i) {
    auto& row = out.rows[i];
    Scenario sc = base;
    sc.detector.s = row.s;
    sc.detector.sigma = row.sigma;
    try {
      const auto phase = run_detection(sc, sc.click_intervals, false);
      const auto dq = dq_momentum_stats(phase.samples);
      row.dq_mean_p = dq.mean;
      row.delta_dq = dq.delta;
      row.efficiency = phase.clicks.efficiency;
      row.click_converged = phase.clicks.converged;
    } catch (const std::exception& e) {
      row.status = status_of(e);
    }
  });
  return out;
}

/// Per-detector columns of a barrier-width sweep row.
struct DetectorColumn {
  double tau = kNaN;
  std::optional<double> tau_refined;
  double p_b_given_a = kNaN;
  double clipped_fraction = kNaN;
  double efficiency = kNaN;
  double flux_norm_mismatch = kNaN;
  bool click_converged = false;
  bool horizon_ok = false;
  bool boundary_ok = false;
  std::optional<double> above_barrier;
  std::optional<double> below_barrier;
  std::string status = "ok";
};

struct Figure2Row {
  double d = 0.0;
  DetectorColumn det1;
  DetectorColumn det2;
  double tau_T = kNaN;
  bool tau_T_horizon_ok = false;
  std::string tau_T_status = "ok";

  std::string status() const {
    std::string s;
    auto add = [&](const char* tag, const std::string& st) {
      if (st == "ok") return;
      if (!s.empty()) s += '|';
      s += tag;
      s += ':';
      s += st;
    };
    add("tau1", det1.status);
    add("tau2", det2.status);
    add("tau_T", tau_T_status);
    return s.empty() ? "ok" : s;
  }
};

struct Figure2Options {
  bool refine = false;
  /// Split the second (narrow) detector's transmission above/below V0.
  bool above_barrier_check = false;
  std::size_t workers = 1;
  /// Called once per finished (row, column) job; must be thread-safe.
  Logger progress;
};

struct Figure2Result {
  Scenario base;
  Detector detector1;
  Detector detector2;
  Figure2Options options;
  std::vector<Figure2Row> rows;
};

inline DetectorColumn traverse_column(const Scenario& sc, bool refine, bool above_barrier_check) {
  DetectorColumn col;
  try {
    TraversalOptions topts;
    topts.intervals = sc.click_intervals;
    topts.refine = refine;
    topts.above_barrier_check = above_barrier_check;
    const auto t = run_traversal(sc, topts);
    col.tau = t.result.mean_tau;
    if (t.refined) col.tau_refined = t.refined->mean_tau;
    col.p_b_given_a = t.result.p_b_given_a;
    col.clipped_fraction = t.max_clipped_fraction;
    col.efficiency = t.efficiency;
    col.flux_norm_mismatch = t.max_flux_norm_mismatch;
    col.click_converged = t.click_converged;
    col.horizon_ok = t.horizon_ok;
    col.boundary_ok = t.boundary_ok;
    col.above_barrier = t.above_barrier;
    col.below_barrier = t.below_barrier;
  } catch (const std::exception& e) {
    col.status = status_of(e);
  }
  return col;
}

/// Mean traversal times versus barrier width for two passage detectors, plus
/// the flux-average time from a detector-free run.
inline Figure2Result run_figure2(const Scenario& base, const Detector& a1, const Detector& a2,
                                 const std::vector<double>& d_values,
                                 const Figure2Options& opts = {}) {
  Figure2Result out;
  out.base = base;
  out.detector1 = a1;
  out.detector2 = a2;
  out.options = opts;
  for (double d : d_values) {
    Figure2Row row;
    row.d = d;
    out.rows.push_back(std::move(row));
  }

  // Jobs: (row, column) pairs so both detectors of a row can run concurrently.
  parallel_for(out.rows.size() * 3, opts.workers, [&](std::size_t job) {
    auto& row = out.rows[job / 3];
    Scenario sc = base;
    sc.barrier_width = row.d;
    switch (job % 3) {
      case 0:
        sc.detector = a1;
        row.det1 = traverse_column(sc, opts.refine, false);
        break;
      case 1:
        sc.detector = a2;
        row.det2 = traverse_column(sc, opts.refine, opts.above_barrier_check);
        break;
      default:
        try {
          const auto t = run_tau_T(sc);
          row.tau_T = t.tau_T;
          row.tau_T_horizon_ok = t.horizon_ok;
        } catch (const std::exception& e) {
          row.tau_T_status = status_of(e);
        }
    }
    if (opts.progress) {
      static constexpr const char* kNames[] = {"tau1", "tau2", "tau_T"};
      const int col = static_cast<int>(job % 3);
      const double v = col == 0 ? row.det1.tau : col == 1 ? row.det2.tau : row.tau_T;
      const std::string& st = col == 0 ? row.det1.status
                              : col == 1 ? row.det2.status
                                         : row.tau_T_status;
      std::ostringstream line;
      line << "d=" << row.d << ' ' << kNames[col] << '=' << v << " (" << st << ')';
      opts.progress(line.str());
    }
  });
  return out;
}

}  // namespace tracktime
