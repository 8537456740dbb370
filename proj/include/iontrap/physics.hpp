#pragma once

#include <array>
#include <string>
#include <vector>

namespace iontrap {

/// Linear map from electrode voltages to the Mathieu parameters of the
/// reference ion: q_z = q_per_volt * V_rf, a_z = a_per_volt * U_dc.
///
/// The trap geometry is not modeled; the defaults reproduce the open-ring
/// trap operating point (730 Vpp, -11.5 V -> q_z = 0.25, omega_z ~ 2pi x 80 kHz).
struct GeometryFactor {
    double q_per_volt = 0.25 / 730.0;
    double a_per_volt = -0.0194030843629969 / -11.5;
};

/// RF/DC drive of the trap. Voltages follow the peak-to-peak convention for
/// V_rf. q_z and a_z always refer to species[0] of the crystal being trapped.
struct TrapConfig {
    double omega_rf = 0.0;  // rad/s
    double v_rf = 0.0;      // V (peak-to-peak)
    double u_dc = 0.0;      // V
    double q_z = 0.0;
    double a_z = 0.0;
    GeometryFactor geometry;

    static TrapConfig from_voltages(double omega_rf, double v_rf, double u_dc,
                                    GeometryFactor geometry = {});
    /// Fixes q_z and solves the secular-frequency relation for a_z.
    static TrapConfig from_secular(double omega_rf, double q_z, double omega_z);

    /// |q_z| < 0.4, the regime where the pseudopotential picture holds.
    bool adiabatic() const noexcept;
    /// a_z + q_z^2/2 > 0.
    bool confining() const noexcept;
    /// Throws DomainError / UnstableConfinementError.
    void validate() const;
};

struct IonSpecies {
    double mass = 0.0;    // kg
    double charge = 0.0;  // C
    std::string label;

    /// Singly charged ion of the given neutral atomic mass.
    static IonSpecies singly_charged(double atomic_mass_u, std::string label);
    static IonSpecies ca40();
    /// Known labels: Ca40, Re187, Ho163, Os187.
    static IonSpecies lookup(const std::string& label);

    void validate() const;
};

/// One or two ions sharing the same axial well and damping rate.
struct CrystalConfig {
    std::vector<IonSpecies> species;
    double gamma_z = 0.0;  // s^-1, amplitude damping rate

    std::size_t size() const noexcept { return species.size(); }
    /// M/m with m the mass of species[0]; 1 for a single ion.
    double mass_ratio() const;
    void validate() const;
};

struct HeatingModel {
    double s_e = 0.0;      // V^2 m^-2 Hz^-1 at omega_z
    double zeta = 0.0;     // J s^-1 V^-2
    double k_const = 0.0;  // J s^-1
    void validate() const;
};

struct ModePair {
    double minus = 0.0;
    double plus = 0.0;
};

/// Linearized axial normal modes of a one- or two-ion crystal.
/// vectors[k] is the k-th orthonormal eigenvector of the mass-weighted
/// Hessian, modes ordered by increasing frequency.
struct NormalModes {
    std::vector<double> frequencies;
    std::vector<std::array<double, 2>> vectors;
};

/// Secular frequency (omega_rf/2) sqrt(a + q^2/2) for an arbitrary (a, q)
/// pair, usable for the radial direction as well.
double secular_frequency(double omega_rf, double a, double q);
double secular_frequency(const TrapConfig& trap);

/// Spring constant of the axial well seen by an ion of the given charge.
/// The trap parameters refer to `reference`.
double axial_stiffness(const TrapConfig& trap, const IonSpecies& reference,
                       double charge);

/// Two-ion spacing (Q^2 / (2 pi eps0 m omega_z^2))^(1/3).
double equilibrium_separation(const IonSpecies& species, double omega_z);

/// Equilibrium positions in a well of stiffness k_i = stiffness * Q_i/Q_0.
/// Single ion sits at 0; two ions from the closed-form force balance.
std::vector<double> equilibrium_positions(const CrystalConfig& crystal, double stiffness);

/// Mass-dependent two-ion eigenfrequencies relative to the equal-mass COM
/// frequency omega_ref. minus <= plus.
ModePair two_ion_eigenfrequencies(double mu, double omega_ref);

/// Normal modes about equilibrium for a well of the given stiffness (for species[0]).
NormalModes normal_modes(const CrystalConfig& crystal, double stiffness);

/// Noise heating rate e^2 S_E / (4 m hbar omega_z), quanta/s.
double heating_rate_single(const IonSpecies& species, double omega_z, double s_e);

/// COM heating rate for spatially correlated noise: N times the single-ion rate.
double heating_rate_com(int n_ions, double single_rate);

/// (K + zeta V^2) / (gamma_z k_B).
double doppler_limit_temperature(const HeatingModel& model, double gamma_z, double v_noise);

}  // namespace iontrap
