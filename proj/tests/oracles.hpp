#pragma once

// Independent reference values for the tests.  Nothing here calls into the
// library's numerics; closed forms and brute-force sums only.

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace oracle {

using cplx = std::complex<double>;

/// Stationary transmission coefficient of a square barrier (hbar = m = 1).
inline double square_barrier_T(double E, double V0, double d) {
  if (d == 0.0 || V0 == 0.0) return 1.0;
  const double diff = E - V0;
  if (std::abs(diff) < 1e-12 * V0) return 1.0 / (1.0 + V0 * d * d / 2.0);
  if (diff < 0.0) {
    const double kappa = std::sqrt(-2.0 * diff);
    const double sh = std::sinh(kappa * d);
    return 1.0 / (1.0 + V0 * V0 * sh * sh / (4.0 * E * -diff));
  }
  const double q = std::sqrt(2.0 * diff);
  const double sn = std::sin(q * d);
  return 1.0 / (1.0 + V0 * V0 * sn * sn / (4.0 * E * diff));
}

/// Energy of lattice wavenumber k under the three-point Laplacian.
inline double lattice_energy(double k, double dx) {
  return (1.0 - std::cos(k * dx)) / (dx * dx);
}

/// Wavenumber whose lattice energy is E.
inline double lattice_wavenumber(double E, double dx) {
  return std::acos(1.0 - E * dx * dx) / dx;
}

/// T averaged over the momentum distribution of a Gaussian with mean k0 and
/// momentum variance dp2, using lattice energies.
inline double packet_averaged_T(double k0, double dp2, double dx, double V0, double d) {
  const double dp = std::sqrt(dp2);
  const int n = 4001;
  double num = 0.0;
  double den = 0.0;
  for (int i = 0; i < n; ++i) {
    const double k = k0 - 8.0 * dp + 16.0 * dp * (i + 0.5) / n;
    if (k <= 0.0) continue;
    const double w = std::exp(-(k - k0) * (k - k0) / (2.0 * dp2));
    num += w * square_barrier_T(lattice_energy(k, dx), V0, d);
    den += w;
  }
  return num / den;
}

/// Free Gaussian: spatial variance at time t.
/// inv_mass is the curvature of the dispersion at the carrier: 1 in the
/// continuum, cos(k dx) for the three-point lattice Laplacian.
inline double free_gaussian_variance(double var0, double t, double inv_mass = 1.0) {
  const double r = inv_mass * t / (2.0 * var0);
  return var0 * (1.0 + r * r);
}

/// Group velocity of the three-point lattice Laplacian, sin(k dx)/dx.
inline double lattice_group_velocity(double k, double dx) { return std::sin(k * dx) / dx; }

/// Peak density of a normalized Gaussian with spatial variance var.
inline double gaussian_peak_density(double var) {
  return 1.0 / std::sqrt(2.0 * std::numbers::pi * var);
}

/// Momentum variance after multiplying an unchirped Gaussian (spatial
/// variance var_x) by a Gaussian window exp(-(x-a)^2 / (2 sigma^2)) centred on
/// the packet.
inline double collapsed_momentum_variance(double var_x, double sigma) {
  return 1.0 / (4.0 * var_x) + 1.0 / (2.0 * sigma * sigma);
}

/// Flat imaginary potential -i s^2/2: N(t).
inline double flat_absorber_norm(double s, double t) { return std::exp(-s * s * t); }

/// Click density for the flat absorber over [0, t_end].
inline double flat_absorber_click_density(double s, double t, double t_end) {
  const double r = s * s;
  return r * std::exp(-r * t) / (1.0 - std::exp(-r * t_end));
}

/// Naive O(N^2) DFT; returns the fraction of |psi_k|^2 with positive k
/// (Nyquist and zero bins split evenly).
inline double positive_momentum_fraction(const std::vector<cplx>& psi) {
  const std::size_t n = psi.size();
  double pos = 0.0;
  double total = 0.0;
  for (std::size_t m = 0; m < n; ++m) {
    cplx acc{};
    for (std::size_t j = 0; j < n; ++j) {
      const double phase = -2.0 * std::numbers::pi * static_cast<double>(m * j % n) /
                           static_cast<double>(n);
      acc += psi[j] * cplx{std::cos(phase), std::sin(phase)};
    }
    const double w = std::norm(acc);
    total += w;
    if (m == 0 || 2 * m == n) {
      pos += 0.5 * w;
    } else if (2 * m < n) {
      pos += w;
    }
  }
  return pos / total;
}

}  // namespace oracle
