#pragma once

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <vector>

#include "tracktime/grid.hpp"
#include "tracktime/units.hpp"

namespace tracktime {

namespace detail {

// FFTW planning is not thread-safe; execution with new-array execute is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

/// In-place discrete Fourier transform of `data` (sign -1 forward, +1 backward).
inline void dft_in_place(std::vector<cplx>& data, int sign) {
  static_assert(sizeof(cplx) == sizeof(fftw_complex));
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_1d(static_cast<int>(data.size()), buf, buf, sign, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
}

/// Momentum (hbar*k) carried by DFT bin m of an n-point lattice.
inline double bin_momentum(std::size_t m, std::size_t n, double dx) {
  const auto mm = static_cast<double>(m);
  const auto nn = static_cast<double>(n);
  const double k = 2.0 * std::numbers::pi * (m < (n + 1) / 2 ? mm : mm - nn) / (nn * dx);
  return units::hbar * k;
}

}  // namespace detail

/// Unnormalized weight |psi~(p)|^2 per DFT bin.
struct MomentumDistribution {
  std::vector<double> momenta;
  std::vector<double> weights;
};

inline MomentumDistribution momentum_distribution(const WaveFunction& psi) {
  std::vector<cplx> spec = psi.amplitudes;
  detail::dft_in_place(spec, FFTW_FORWARD);
  MomentumDistribution out;
  out.momenta.resize(spec.size());
  out.weights.resize(spec.size());
  for (std::size_t m = 0; m < spec.size(); ++m) {
    out.momenta[m] = detail::bin_momentum(m, spec.size(), psi.grid.dx);
    out.weights[m] = std::norm(spec[m]);
  }
  return out;
}

/// Fraction of the norm carried by momenta strictly above `p_threshold`.
inline double momentum_fraction_above(const WaveFunction& psi, double p_threshold) {
  const auto dist = momentum_distribution(psi);
  double above = 0.0;
  double total = 0.0;
  for (std::size_t m = 0; m < dist.weights.size(); ++m) {
    total += dist.weights[m];
    if (dist.momenta[m] > p_threshold) above += dist.weights[m];
  }
  return total > 0.0 ? above / total : 0.0;
}

/// Projection of psi onto momenta in (p_lo, p_hi].  The result is not
/// renormalized, so its norm is the weight of that momentum band.
inline WaveFunction momentum_band(const WaveFunction& psi, double p_lo, double p_hi) {
  std::vector<cplx> spec = psi.amplitudes;
  detail::dft_in_place(spec, FFTW_FORWARD);
  const std::size_t n = spec.size();
  for (std::size_t m = 0; m < n; ++m) {
    const double p = detail::bin_momentum(m, n, psi.grid.dx);
    if (!(p > p_lo && p <= p_hi)) spec[m] = cplx{};
  }
  detail::dft_in_place(spec, FFTW_BACKWARD);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (auto& a : spec) a *= inv_n;
  // Keep the hard-wall end points exact.
  spec.front() = spec.back() = cplx{};
  return WaveFunction(psi.grid, std::move(spec), psi.time);
}

}  // namespace tracktime
