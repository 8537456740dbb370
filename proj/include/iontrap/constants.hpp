#pragma once

#include <numbers>

namespace iontrap::constants {

// CODATA 2018 recommended values, SI.
inline constexpr double elementary_charge = 1.602176634e-19;     // C (exact)
inline constexpr double vacuum_permittivity = 8.8541878128e-12;  // F/m
inline constexpr double hbar = 1.054571817e-34;                  // J s
inline constexpr double boltzmann = 1.380649e-23;                // J/K (exact)
inline constexpr double atomic_mass_unit = 1.66053906660e-27;    // kg
inline constexpr double electron_mass = 9.1093837015e-31;        // kg

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

// e^2 / (4 pi eps0), the Coulomb constant for two elementary charges (J m).
inline constexpr double coulomb_e2 =
    elementary_charge * elementary_charge / (4.0 * pi * vacuum_permittivity);

// Neutral atomic masses (u); singly charged ions subtract one electron.
inline constexpr double mass_ca40_u = 39.962590863;
inline constexpr double mass_re187_u = 186.9557501;
inline constexpr double mass_ho163_u = 162.9287335;
inline constexpr double mass_os187_u = 186.9557474;

}  // namespace iontrap::constants
