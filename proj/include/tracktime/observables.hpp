#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numeric>
#include <sstream>

#include "tracktime/error.hpp"
#include "tracktime/grid.hpp"
#include "tracktime/units.hpp"

namespace tracktime {

/// Composite trapezoid estimate of the integral of |psi|^2.
inline double norm(const WaveFunction& psi) {
  const std::size_t n = psi.size();
  if (n == 0) return 0.0;
  double sum = 0.0;
  for (const auto& a : psi.amplitudes) sum += std::norm(a);
  sum -= 0.5 * (std::norm(psi[0]) + std::norm(psi[n - 1]));
  return sum * psi.grid.dx;
}

/// Trapezoid estimate of the probability at x >= x_from, starting at the
/// lattice point nearest to x_from.  Pairs with `flux` at that point: the
/// time integral of the flux there equals the change of this quantity.
inline double norm_beyond(const WaveFunction& psi, double x_from) {
  const std::size_t n = psi.size();
  const std::size_t j0 = psi.grid.nearest_index(x_from);
  double sum = 0.5 * std::norm(psi[j0]);
  for (std::size_t j = j0 + 1; j < n; ++j) sum += std::norm(psi[j]);
  if (j0 + 1 < n) sum -= 0.5 * std::norm(psi[n - 1]);
  return sum * psi.grid.dx;
}

/// Lattice index of an interior probe point, or throws probe-out-of-range.
inline std::size_t probe_index(const Grid& grid, double x_probe) {
  const double r = std::round((x_probe - grid.x_min) / grid.dx);
  if (!(r >= 1.0) || r > static_cast<double>(grid.n_points - 2)) {
    std::ostringstream msg;
    msg << "probe at x=" << x_probe << " is not in the grid interior";
    throw Error(ErrorCode::probe_out_of_range, msg.str());
  }
  return static_cast<std::size_t>(r);
}

/// Probability current (hbar/m) Im(psi* dpsi/dx) at lattice point j,
/// central difference.
inline double flux_at_index(const WaveFunction& psi, std::size_t j) noexcept {
  const cplx d = (psi[j + 1] - psi[j - 1]) / (2.0 * psi.grid.dx);
  return units::hbar / units::mass * std::imag(std::conj(psi[j]) * d);
}

/// Probability current at the lattice point nearest to x_probe.
inline double flux(const WaveFunction& psi, double x_probe) {
  return flux_at_index(psi, probe_index(psi.grid, x_probe));
}

/// <x> over the grid (rectangle rule).
inline double mean_position(const WaveFunction& psi) {
  double w = 0.0;
  double m = 0.0;
  for (std::size_t j = 0; j < psi.size(); ++j) {
    const double r = std::norm(psi[j]);
    w += r;
    m += r * psi.grid.x(j);
  }
  if (!(w > 0.0)) throw Error(ErrorCode::zero_norm, "mean position of a zero state");
  return m / w;
}

struct MomentumMoments {
  double mean = 0.0;
  double second_moment = 0.0;

  double variance() const noexcept { return second_moment - mean * mean; }
};

/// First and second momentum moments with central differences.
///
/// The carrier wavenumber kc = arg(sum psi_j* psi_{j+1}) / dx is factored out
/// before differencing, so the difference operator only acts on the slowly
/// varying envelope.  The momentum operator used is p = hbar*kc - i*hbar*D on
/// the envelope; it is Hermitian on the hard-wall lattice, so the variance is
/// non-negative and <p^2> = ||p psi||^2 is real.
inline MomentumMoments momentum_moments(const WaveFunction& psi) {
  const std::size_t n = psi.size();
  const double dx = psi.grid.dx;
  const double nrm = norm(psi);
  if (!(nrm > 0.0) || !std::isfinite(nrm)) {
    throw Error(ErrorCode::zero_norm, "momentum moments of a state with zero norm");
  }

  cplx overlap{};
  for (std::size_t j = 0; j + 1 < n; ++j) overlap += std::conj(psi[j]) * psi[j + 1];
  const double kc = std::arg(overlap) / dx;

  std::vector<cplx> env(n);
  for (std::size_t j = 0; j < n; ++j) {
    env[j] = psi[j] * std::polar(1.0, -kc * (psi.grid.x(j) - psi.grid.x_min));
  }

  cplx first{};
  double second = 0.0;
  const cplx minus_i_hbar{0.0, -units::hbar};
  for (std::size_t j = 0; j < n; ++j) {
    const cplx right = j + 1 < n ? env[j + 1] : cplx{};
    const cplx left = j > 0 ? env[j - 1] : cplx{};
    const cplx p_env = units::hbar * kc * env[j] + minus_i_hbar * (right - left) / (2.0 * dx);
    first += std::conj(env[j]) * p_env;
    second += std::norm(p_env);
  }
  // Rectangle sums match the trapezoid norm since the end points vanish on the
  // hard-wall lattice; use the same normalization for both moments.
  const double rect = std::accumulate(psi.amplitudes.begin(), psi.amplitudes.end(), 0.0,
                                      [](double acc, const cplx& a) { return acc + std::norm(a); });
  return {first.real() / rect, second / rect};
}

}  // namespace tracktime
