#pragma once

#include <cmath>
#include <optional>
#include <sstream>
#include <vector>

#include "tracktime/error.hpp"
#include "tracktime/grid.hpp"

namespace tracktime {

/// Gaussian detector window g(x) = s exp(-(x-a)^2 / (2 sigma^2)).  While
/// active it contributes the absorbing term -(i/2) g^2 to the Hamiltonian.
struct Detector {
  double a = 50.0;
  double s = 1.0;
  double sigma = 4.5;
  bool active = true;

  double window(double x) const noexcept {
    const double u = (x - a) / sigma;
    return s * std::exp(-0.5 * u * u);
  }
};

/// Square barrier V0 on [barrier_left, barrier_left + barrier_width) plus
/// detector absorbers.  `flat_absorber`, when set to s, adds the uniform
/// imaginary potential -i s^2/2 everywhere (the sigma -> infinity limit).
struct PotentialSpec {
  double barrier_left = 80.0;
  double barrier_width = 0.0;
  double barrier_height = 50.0;
  std::vector<Detector> detectors;
  std::optional<double> flat_absorber;

  double barrier_right() const noexcept { return barrier_left + barrier_width; }

  bool has_absorber() const noexcept {
    if (flat_absorber) return true;
    for (const auto& d : detectors)
      if (d.active) return true;
    return false;
  }

  /// Copy with every detector switched off.
  PotentialSpec without_detectors() const {
    PotentialSpec out = *this;
    for (auto& d : out.detectors) d.active = false;
    out.flat_absorber.reset();
    return out;
  }
};

inline void validate(const PotentialSpec& spec) {
  if (!(spec.barrier_width >= 0.0) || !std::isfinite(spec.barrier_height)) {
    throw Error(ErrorCode::precondition, "barrier width must be >= 0 and height finite");
  }
  int active = 0;
  for (const auto& d : spec.detectors) {
    if (!(d.sigma > 0.0) || !(d.s >= 0.0)) {
      std::ostringstream msg;
      msg << "detector at a=" << d.a << " needs sigma > 0 and s >= 0";
      throw Error(ErrorCode::precondition, msg.str());
    }
    active += d.active ? 1 : 0;
  }
  if (active > 1) {
    throw Error(ErrorCode::precondition, "at most one detector may be active at a time");
  }
  if (spec.flat_absorber && !(*spec.flat_absorber >= 0.0)) {
    throw Error(ErrorCode::precondition, "flat absorber intensity must be >= 0");
  }
}

/// Lattice index range [first, last) covered by the barrier.
inline std::pair<std::size_t, std::size_t> barrier_indices(const PotentialSpec& spec,
                                                           const Grid& grid) {
  constexpr double eps = 1e-9;
  auto to_index = [&](double x) {
    const double r = std::ceil((x - grid.x_min) / grid.dx - eps);
    if (r <= 0.0) return std::size_t{0};
    return std::min(static_cast<std::size_t>(r), grid.n_points);
  };
  const std::size_t first = to_index(spec.barrier_left);
  const std::size_t last = to_index(spec.barrier_right());
  return {first, std::max(first, last)};
}

/// V(x) + Lambda(x) sampled on the grid.
inline std::vector<cplx> evaluate_potential(const PotentialSpec& spec, const Grid& grid) {
  validate(spec);
  std::vector<cplx> v(grid.n_points, cplx{});
  const auto [first, last] = barrier_indices(spec, grid);
  for (std::size_t j = first; j < last; ++j) v[j] = spec.barrier_height;

  for (const auto& det : spec.detectors) {
    if (!det.active || det.s == 0.0) continue;
    for (std::size_t j = 0; j < grid.n_points; ++j) {
      const double g = det.window(grid.x(j));
      v[j] += cplx{0.0, -0.5 * g * g};
    }
  }
  if (spec.flat_absorber) {
    const double s = *spec.flat_absorber;
    for (auto& vj : v) vj += cplx{0.0, -0.5 * s * s};
  }
  return v;
}

}  // namespace tracktime
