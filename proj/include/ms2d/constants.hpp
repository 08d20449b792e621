#pragma once

#include <numbers>

// Physical constants (CODATA 2018) and unit helpers shared across the library.
// All frequencies are stored internally as angular frequencies in rad/s; the
// CLI and file formats use ordinary frequencies (MHz / Hz) and convert at the
// boundary.

namespace ms2d {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

inline constexpr double hbar = 1.054571817e-34;                // J s
inline constexpr double atomic_mass_unit = 1.66053906660e-27;  // kg
inline constexpr double elementary_charge = 1.602176634e-19;   // C
inline constexpr double coulomb_constant = 8.9875517923e9;     // N m^2 C^-2

// 171Yb+ (atomic mass of the neutral, electron mass neglected).
inline constexpr double yb171_mass = 170.936331 * atomic_mass_unit;

// Counter-propagating 355 nm Raman beams: |Delta k| = 2 * 2*pi/lambda.
inline constexpr double raman_wavelength = 355e-9;  // m
inline constexpr double default_delta_k = 4.0 * std::numbers::pi / raman_wavelength;

constexpr double mhz_to_angular(double f_mhz) { return two_pi * f_mhz * 1e6; }
constexpr double angular_to_mhz(double w) { return w / (two_pi * 1e6); }
constexpr double hz_to_angular(double f_hz) { return two_pi * f_hz; }
constexpr double angular_to_hz(double w) { return w / two_pi; }

}  // namespace ms2d
