#pragma once

// Atomic units throughout: positions, times, momenta and energies are
// dimensionless multiples of the atomic unit.
namespace tracktime::units {

inline constexpr double hbar = 1.0;
inline constexpr double mass = 1.0;

}  // namespace tracktime::units
