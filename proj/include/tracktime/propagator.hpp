#pragma once

#include <algorithm>
#include <array>
#include <complex>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <vector>

#if defined(__SSE__) || defined(_M_X64)
#include <xmmintrin.h>
#define TRACKTIME_HAS_MXCSR 1
#endif

#include "tracktime/error.hpp"
#include "tracktime/grid.hpp"
#include "tracktime/observables.hpp"
#include "tracktime/potential.hpp"
#include "tracktime/spectral.hpp"
#include "tracktime/units.hpp"

namespace tracktime {

enum class Boundary { hard_wall };

/// Flushes subnormal results to zero for the lifetime of the guard.  Packet
/// tails decay into the subnormal range, where arithmetic is an order of
/// magnitude slower; values below 1e-308 carry no probability.
class FlushDenormals {
 public:
  FlushDenormals() {
#ifdef TRACKTIME_HAS_MXCSR
    saved_ = _mm_getcsr();
    _mm_setcsr(saved_ | 0x8040u);  // FTZ | DAZ
#endif
  }
  ~FlushDenormals() {
#ifdef TRACKTIME_HAS_MXCSR
    _mm_setcsr(saved_);
#endif
  }
  FlushDenormals(const FlushDenormals&) = delete;
  FlushDenormals& operator=(const FlushDenormals&) = delete;

 private:
  unsigned saved_ = 0;
};

struct PropagatorConfig {
  double dt = 0.002;
  Boundary boundary = Boundary::hard_wall;
  bool resolution_check = true;
  /// Momenta with |p| dx / hbar above this are considered unresolved...
  double resolution_limit = std::numbers::pi / 2.0;
  /// ...and may carry at most this fraction of the norm.  Momentum-band
  /// projections leave ~1e-5 there from ringing at the wall nodes.
  double resolution_tolerance = 1e-4;
  /// dt <= C dx^2 is not required for stability; runs exceeding it are flagged.
  double dt_dx2_limit = 1.0;
};

/// Flux recorded at one probe; `position` is the lattice point actually used.
struct FluxProbe {
  double requested = 0.0;
  double position = 0.0;
  std::size_t index = 0;
  std::vector<double> values;
};

/// Per-step record of a propagation run.  All columns share the length of
/// `times`; the first row is the initial state.
struct DetectionSeries {
  std::vector<double> times;
  std::optional<std::vector<double>> norm;
  std::vector<FluxProbe> flux_probes;

  std::size_t size() const noexcept { return times.size(); }

  /// Probe requested at x, or whose snapped lattice position is x.
  const FluxProbe* probe(double x) const noexcept {
    for (const auto& p : flux_probes) {
      if (p.requested == x || std::abs(p.position - x) <= 1e-9 * (1.0 + std::abs(x))) return &p;
    }
    return nullptr;
  }
};

/// Crank-Nicolson (Cayley) stepper for H = -hbar^2/(2m) d^2/dx^2 + V(x)
/// on a hard-wall lattice.  The tridiagonal factorization of
/// (1 + i dt H / 2hbar) is computed once; each step is one forward and one
/// backward sweep.
class CrankNicolson {
 public:
  CrankNicolson(const Grid& grid, std::span<const cplx> potential, double dt)
      : grid_(grid), dt_(dt) {
    if (!(dt > 0.0)) throw Error(ErrorCode::precondition, "time step must be positive");
    if (potential.size() != grid.n_points) {
      throw Error(ErrorCode::precondition, "potential size does not match grid");
    }
    const std::size_t n = grid.n_points;
    const double kin = units::hbar * units::hbar / (2.0 * units::mass * grid.dx * grid.dx);
    const cplx alpha{0.0, dt / (2.0 * units::hbar)};
    off_ = -alpha * kin;  // off-diagonal of the implicit operator
    rhs_diag_.resize(n);
    c_.assign(n, cplx{});
    inv_denom_.assign(n, cplx{});
    cplx c_prev{};
    for (std::size_t j = 1; j + 1 < n; ++j) {
      const cplx h_jj = 2.0 * kin + potential[j];
      rhs_diag_[j] = 1.0 - alpha * h_jj;
      const cplx denom = (1.0 + alpha * h_jj) - off_ * c_prev;
      if (!(std::abs(denom) > 1e-300)) {
        throw Error(ErrorCode::solver_singular, "zero pivot in tridiagonal factorization");
      }
      inv_denom_[j] = 1.0 / denom;
      c_[j] = off_ * inv_denom_[j];
      c_prev = c_[j];
    }
    scratch_.resize(n);
  }

  double dt() const noexcept { return dt_; }
  const Grid& grid() const noexcept { return grid_; }

  /// Advance amplitudes in place by one time step.
  void advance(std::span<cplx> psi) {
    const std::size_t n = grid_.n_points;
    auto& d = scratch_;
    // Explicit half: (1 - i dt H / 2hbar) psi, with -off_ = +alpha*kin.
    cplx d_prev{};
    for (std::size_t j = 1; j + 1 < n; ++j) {
      const cplx r = rhs_diag_[j] * psi[j] - off_ * (psi[j - 1] + psi[j + 1]);
      // (r - off*d_prev)/denom with c_j = off/denom keeps one product on the
      // sweep's dependency chain.
      d_prev = r * inv_denom_[j] - c_[j] * d_prev;
      d[j] = d_prev;
    }
    psi[n - 1] = cplx{};
    cplx next{};
    for (std::size_t j = n - 2; j >= 1; --j) {
      next = d[j] - c_[j] * next;
      psi[j] = next;
    }
    psi[0] = cplx{};
  }

  void advance(WaveFunction& psi) {
    advance(std::span<cplx>(psi.amplitudes));
    psi.time += dt_;
  }

 private:
  Grid grid_;
  double dt_;
  cplx off_;
  std::vector<cplx> rhs_diag_;
  std::vector<cplx> c_;
  std::vector<cplx> inv_denom_;
  std::vector<cplx> scratch_;
};

/// Throws resolution error when more than the tolerated fraction of the
/// state's norm sits at momenta the lattice does not resolve.  Spectral, so a
/// superposition of incident and reflected waves is judged by its components.
inline void check_resolution(const WaveFunction& psi, const PropagatorConfig& cfg) {
  if (!cfg.resolution_check) return;
  const double p_lim = cfg.resolution_limit * units::hbar / psi.grid.dx;
  const auto band = momentum_distribution(psi);
  double total = 0.0;
  double outside = 0.0;
  for (std::size_t m = 0; m < band.weights.size(); ++m) {
    total += band.weights[m];
    if (std::abs(band.momenta[m]) > p_lim) outside += band.weights[m];
  }
  if (!(total > 0.0)) return;
  if (outside > cfg.resolution_tolerance * total) {
    std::ostringstream msg;
    msg << "fraction " << outside / total << " of the norm has |p| dx/hbar > "
        << cfg.resolution_limit;
    throw Error(ErrorCode::resolution, msg.str());
  }
}

/// One Crank-Nicolson step of psi under spec.
inline WaveFunction step(const WaveFunction& psi, const PotentialSpec& spec,
                         const PropagatorConfig& cfg) {
  check_resolution(psi, cfg);
  const auto v = evaluate_potential(spec, psi.grid);
  CrankNicolson cn(psi.grid, v, cfg.dt);
  WaveFunction out = psi;
  cn.advance(out);
  return out;
}

struct RunOptions {
  double t_end = 0.0;
  std::vector<double> probes;
  bool record_norm = false;
  /// Step indices (0 = initial state) at which to keep a copy of the state.
  std::vector<std::size_t> snapshot_steps;
  /// When positive, stop once the flux at the first probe has fallen to this
  /// fraction of its running peak.
  double stop_flux_decay = 0.0;
  /// The stop condition is only tested from this time on.
  double stop_not_before = 0.0;
};

/// Boundary-band mass above which a run is flagged as contaminated.
inline constexpr double kBoundaryWarnMass = 1e-8;

struct RunResult {
  WaveFunction state;
  DetectionSeries series;
  std::vector<WaveFunction> snapshots;
  double max_boundary_mass = 0.0;
  bool boundary_contaminated = false;
  double dt_over_dx2 = 0.0;
  bool dt_dx2_exceeded = false;
  /// The flux-decay stop condition was met before t_end.
  bool stopped_early = false;
};

inline std::size_t step_count(double t_begin, double t_end, double dt) {
  return static_cast<std::size_t>(std::ceil((t_end - t_begin) / dt - 1e-9));
}

/// Propagate from psi.time to t_end, recording time, norm and probe fluxes
/// after every step.
inline RunResult run(const WaveFunction& psi, const PotentialSpec& spec,
                     const PropagatorConfig& cfg, const RunOptions& opts) {
  if (!(opts.t_end > psi.time)) {
    throw Error(ErrorCode::precondition, "t_end must lie after the state's time");
  }
  check_resolution(psi, cfg);
  const auto v = evaluate_potential(spec, psi.grid);
  CrankNicolson cn(psi.grid, v, cfg.dt);
  FlushDenormals ftz;

  const std::size_t steps = step_count(psi.time, opts.t_end, cfg.dt);
  RunResult res;
  res.state = psi;
  res.dt_over_dx2 = cfg.dt / (psi.grid.dx * psi.grid.dx);
  res.dt_dx2_exceeded = res.dt_over_dx2 > cfg.dt_dx2_limit;

  auto& series = res.series;
  series.times.reserve(steps + 1);
  if (opts.record_norm) {
    series.norm.emplace();
    series.norm->reserve(steps + 1);
  }
  for (double x : opts.probes) {
    FluxProbe p;
    p.requested = x;
    p.index = probe_index(psi.grid, x);
    p.position = psi.grid.x(p.index);
    p.values.reserve(steps + 1);
    series.flux_probes.push_back(std::move(p));
  }

  std::size_t next_snap = 0;
  auto snapshots = opts.snapshot_steps;
  std::sort(snapshots.begin(), snapshots.end());

  const double t0 = psi.time;
  auto record = [&](std::size_t k) {
    // Absolute times avoid drift from repeated additions of dt.
    res.state.time = t0 + static_cast<double>(k) * cfg.dt;
    series.times.push_back(res.state.time);
    if (opts.record_norm) series.norm->push_back(norm(res.state));
    const double bm = boundary_mass(res.state);
    res.max_boundary_mass = std::max(res.max_boundary_mass, bm);
    while (next_snap < snapshots.size() && snapshots[next_snap] == k) {
      res.snapshots.push_back(res.state);
      ++next_snap;
    }
  };

  // Currents of the half-step states (psi^k + psi^{k+1}) / 2.  The scheme
  // satisfies the lattice continuity equation exactly for these, so the
  // trapezoid integral of the recorded flux equals the probability that
  // crossed the probe, to round-off.
  std::vector<std::vector<double>> half(series.flux_probes.size());
  std::vector<std::array<cplx, 3>> before(series.flux_probes.size());
  for (auto& h : half) h.reserve(steps);

  const bool watch = opts.stop_flux_decay > 0.0 && !series.flux_probes.empty();
  double watch_peak = 0.0;

  record(0);
  for (std::size_t k = 1; k <= steps; ++k) {
    for (std::size_t i = 0; i < before.size(); ++i) {
      const std::size_t j = series.flux_probes[i].index;
      before[i] = {res.state[j - 1], res.state[j], res.state[j + 1]};
    }
    cn.advance(std::span<cplx>(res.state.amplitudes));
    for (std::size_t i = 0; i < before.size(); ++i) {
      const std::size_t j = series.flux_probes[i].index;
      const cplx lo = 0.5 * (before[i][0] + res.state[j - 1]);
      const cplx mid = 0.5 * (before[i][1] + res.state[j]);
      const cplx hi = 0.5 * (before[i][2] + res.state[j + 1]);
      half[i].push_back(units::hbar / units::mass *
                        std::imag(std::conj(mid) * (hi - lo)) / (2.0 * psi.grid.dx));
    }
    record(k);
    if (watch) {
      const double j = std::abs(half.front().back());
      watch_peak = std::max(watch_peak, j);
      if (res.state.time >= opts.stop_not_before && watch_peak > 0.0 &&
          j <= opts.stop_flux_decay * watch_peak) {
        res.stopped_early = true;
        break;
      }
    }
  }
  // Sample k is the mean of the neighbouring half-step currents; the two end
  // samples take the single adjacent one.
  for (std::size_t i = 0; i < half.size(); ++i) {
    auto& values = series.flux_probes[i].values;
    const auto& h = half[i];
    const std::size_t taken = h.size();
    values.resize(taken + 1);
    values.front() = h.front();
    values.back() = h.back();
    for (std::size_t k = 1; k < taken; ++k) values[k] = 0.5 * (h[k - 1] + h[k]);
  }
  res.boundary_contaminated = res.max_boundary_mass > kBoundaryWarnMass;
  return res;
}

}  // namespace tracktime
