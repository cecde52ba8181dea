#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <sstream>
#include <vector>

#include "tracktime/error.hpp"
#include "tracktime/units.hpp"

namespace tracktime {

using cplx = std::complex<double>;

/// Uniform 1D lattice x_j = x_min + j*dx, j = 0..n_points-1.
struct Grid {
  double x_min = 0.0;
  double x_max = 0.0;
  std::size_t n_points = 0;
  double dx = 0.0;

  double x(std::size_t j) const noexcept { return x_min + static_cast<double>(j) * dx; }

  /// Index of the lattice point closest to `pos` (clamped to the grid).
  std::size_t nearest_index(double pos) const noexcept {
    const double r = std::round((pos - x_min) / dx);
    if (r <= 0.0) return 0;
    const auto j = static_cast<std::size_t>(r);
    return std::min(j, n_points - 1);
  }

  bool operator==(const Grid&) const = default;
};

inline Grid make_grid(double x_min, double x_max, std::size_t n_points) {
  if (!(x_max > x_min) || n_points < 3 || !std::isfinite(x_min) || !std::isfinite(x_max)) {
    std::ostringstream msg;
    msg << "grid [" << x_min << ", " << x_max << "] with " << n_points << " points";
    throw Error(ErrorCode::invalid_extent, msg.str());
  }
  return Grid{x_min, x_max, n_points, (x_max - x_min) / static_cast<double>(n_points - 1)};
}

/// Complex amplitudes on a grid at a given time.
struct WaveFunction {
  Grid grid;
  std::vector<cplx> amplitudes;
  double time = 0.0;

  WaveFunction() = default;
  WaveFunction(const Grid& g, std::vector<cplx> amps, double t = 0.0)
      : grid(g), amplitudes(std::move(amps)), time(t) {
    if (amplitudes.size() != grid.n_points) {
      throw Error(ErrorCode::precondition, "amplitude count does not match grid");
    }
  }
  explicit WaveFunction(const Grid& g, double t = 0.0)
      : grid(g), amplitudes(g.n_points, cplx{}), time(t) {}

  std::size_t size() const noexcept { return amplitudes.size(); }
  cplx& operator[](std::size_t j) noexcept { return amplitudes[j]; }
  const cplx& operator[](std::size_t j) const noexcept { return amplitudes[j]; }
};

/// Restriction of psi to the lattice points inside [x_lo, x_hi], on a grid
/// with the same spacing.  The end points of the window are zeroed (hard
/// wall); `dropped` receives the probability that fell outside.
inline WaveFunction crop(const WaveFunction& psi, double x_lo, double x_hi,
                         double* dropped = nullptr) {
  const Grid& g = psi.grid;
  const std::size_t first = g.nearest_index(std::max(x_lo, g.x_min));
  const std::size_t last = g.nearest_index(std::min(x_hi, g.x_max));
  if (last < first + 2) throw Error(ErrorCode::invalid_extent, "crop window too small");
  Grid sub{g.x(first), g.x(last), last - first + 1, g.dx};
  std::vector<cplx> amps(psi.amplitudes.begin() + static_cast<std::ptrdiff_t>(first),
                         psi.amplitudes.begin() + static_cast<std::ptrdiff_t>(last) + 1);
  double lost = std::norm(amps.front()) + std::norm(amps.back());
  for (std::size_t j = 0; j < first; ++j) lost += std::norm(psi[j]);
  for (std::size_t j = last + 1; j < g.n_points; ++j) lost += std::norm(psi[j]);
  amps.front() = amps.back() = cplx{};
  if (dropped) *dropped = lost * g.dx;
  return WaveFunction(sub, std::move(amps), psi.time);
}

/// Minimum-uncertainty Gaussian: centre, mean momentum, spatial variance.
struct GaussianPrep {
  double x0 = 20.0;
  double p0 = 8.0;
  double var_x = 9.0 / 4.0;
};

/// Number of lattice points at each end treated as the boundary band.
inline constexpr std::size_t kBoundaryBand = 16;

/// Probability mass inside the two boundary bands (rectangle rule).
inline double boundary_mass(const WaveFunction& psi) {
  const std::size_t n = psi.size();
  const std::size_t band = std::min(kBoundaryBand, n / 2);
  double m = 0.0;
  for (std::size_t j = 0; j < band; ++j) {
    m += std::norm(psi[j]) + std::norm(psi[n - 1 - j]);
  }
  return m * psi.grid.dx;
}

/// Relative boundary-band mass allowed for a freshly prepared packet.
inline constexpr double kPrepBoundaryTolerance = 1e-12;

inline WaveFunction prepare_gaussian(const Grid& grid, const GaussianPrep& prep) {
  if (!(prep.var_x > 0.0)) {
    throw Error(ErrorCode::precondition, "var_x must be positive");
  }
  const double width = std::sqrt(prep.var_x);
  if (prep.x0 - grid.x_min < 8.0 * width || grid.x_max - prep.x0 < 8.0 * width) {
    std::ostringstream msg;
    msg << "packet at x0=" << prep.x0 << " with sqrt(var_x)=" << width
        << " is not 8 widths inside [" << grid.x_min << ", " << grid.x_max << "]";
    throw Error(ErrorCode::support_violation, msg.str());
  }

  WaveFunction psi(grid, 0.0);
  for (std::size_t j = 0; j < grid.n_points; ++j) {
    const double x = grid.x(j);
    const double u = x - prep.x0;
    psi[j] = std::exp(cplx{-u * u / (4.0 * prep.var_x), prep.p0 * x / units::hbar});
  }
  // Hard-wall lattice: the end points carry no amplitude.
  psi[0] = psi[grid.n_points - 1] = cplx{};

  double total = 0.0;
  for (const auto& a : psi.amplitudes) total += std::norm(a);
  total *= grid.dx;
  const double scale = 1.0 / std::sqrt(total);
  for (auto& a : psi.amplitudes) a *= scale;

  if (boundary_mass(psi) >= kPrepBoundaryTolerance) {
    throw Error(ErrorCode::support_violation, "packet tail reaches the grid boundary");
  }
  return psi;
}

}  // namespace tracktime
