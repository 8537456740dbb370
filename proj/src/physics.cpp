#include "iontrap/physics.hpp"

#include <cmath>
#include <utility>

#include "iontrap/constants.hpp"
#include "iontrap/error.hpp"

namespace iontrap {

namespace c = constants;

TrapConfig TrapConfig::from_voltages(double omega_rf, double v_rf, double u_dc,
                                     GeometryFactor geometry) {
    TrapConfig t;
    t.omega_rf = omega_rf;
    t.v_rf = v_rf;
    t.u_dc = u_dc;
    t.geometry = geometry;
    t.q_z = geometry.q_per_volt * v_rf;
    t.a_z = geometry.a_per_volt * u_dc;
    return t;
}

TrapConfig TrapConfig::from_secular(double omega_rf, double q_z, double omega_z) {
    if (!(omega_rf > 0.0)) throw DomainError("omega_rf must be positive");
    if (!(omega_z >= 0.0)) throw DomainError("omega_z must be non-negative");
    TrapConfig t;
    t.omega_rf = omega_rf;
    t.q_z = q_z;
    const double r = 2.0 * omega_z / omega_rf;
    t.a_z = r * r - 0.5 * q_z * q_z;
    // Voltages consistent with the default geometry map.
    t.v_rf = q_z / t.geometry.q_per_volt;
    t.u_dc = t.a_z / t.geometry.a_per_volt;
    return t;
}

bool TrapConfig::adiabatic() const noexcept { return std::abs(q_z) < 0.4; }

bool TrapConfig::confining() const noexcept { return a_z + 0.5 * q_z * q_z > 0.0; }

void TrapConfig::validate() const {
    if (!(omega_rf > 0.0)) throw DomainError("trap: omega_rf must be positive");
    if (!std::isfinite(q_z) || !std::isfinite(a_z))
        throw DomainError("trap: Mathieu parameters must be finite");
    if (!confining())
        throw UnstableConfinementError("trap: a_z + q_z^2/2 <= 0, no axial confinement");
}

IonSpecies IonSpecies::singly_charged(double atomic_mass_u, std::string label) {
    return {atomic_mass_u * c::atomic_mass_unit - c::electron_mass, c::elementary_charge,
            std::move(label)};
}

IonSpecies IonSpecies::ca40() { return singly_charged(c::mass_ca40_u, "Ca40"); }

IonSpecies IonSpecies::lookup(const std::string& label) {
    if (label == "Ca40") return ca40();
    if (label == "Re187") return singly_charged(c::mass_re187_u, label);
    if (label == "Ho163") return singly_charged(c::mass_ho163_u, label);
    if (label == "Os187") return singly_charged(c::mass_os187_u, label);
    throw DomainError("unknown ion species '" + label + "'");
}

void IonSpecies::validate() const {
    if (!(mass > 0.0)) throw DomainError("species " + label + ": mass must be positive");
    if (charge == 0.0 || !std::isfinite(charge))
        throw DomainError("species " + label + ": charge must be non-zero");
}

double CrystalConfig::mass_ratio() const {
    if (species.size() < 2) return 1.0;
    return species[1].mass / species[0].mass;
}

void CrystalConfig::validate() const {
    if (species.empty() || species.size() > 2)
        throw DomainError("crystal: 1 or 2 ions supported");
    for (const auto& s : species) s.validate();
    if (!(gamma_z >= 0.0) || !std::isfinite(gamma_z))
        throw DomainError("crystal: gamma_z must be >= 0");
}

void HeatingModel::validate() const {
    if (!(s_e >= 0.0)) throw DomainError("heating: s_e must be >= 0");
    if (!(zeta >= 0.0)) throw DomainError("heating: zeta must be >= 0");
    if (!(k_const >= 0.0)) throw DomainError("heating: K must be >= 0");
}

double secular_frequency(double omega_rf, double a, double q) {
    const double radicand = a + 0.5 * q * q;
    if (a == 0.0 && q == 0.0) return 0.0;
    if (!(radicand > 0.0))
        throw UnstableConfinementError("a + q^2/2 <= 0: secular frequency undefined");
    return 0.5 * omega_rf * std::sqrt(radicand);
}

double secular_frequency(const TrapConfig& trap) {
    return secular_frequency(trap.omega_rf, trap.a_z, trap.q_z);
}

double axial_stiffness(const TrapConfig& trap, const IonSpecies& reference, double charge) {
    const double w = secular_frequency(trap);
    return reference.mass * w * w * (charge / reference.charge);
}

double equilibrium_separation(const IonSpecies& species, double omega_z) {
    if (!(omega_z > 0.0)) throw DomainError("equilibrium_separation: omega_z must be positive");
    species.validate();
    const double q2 = species.charge * species.charge;
    return std::cbrt(q2 / (2.0 * c::pi * c::vacuum_permittivity * species.mass * omega_z * omega_z));
}

namespace {

double coulomb_strength(const CrystalConfig& crystal) {
    return crystal.species[0].charge * crystal.species[1].charge /
           (4.0 * c::pi * c::vacuum_permittivity);
}

std::pair<double, double> stiffnesses(const CrystalConfig& crystal, double stiffness) {
    const double q0 = crystal.species[0].charge;
    return {stiffness, stiffness * crystal.species[1].charge / q0};
}

}  // namespace

std::vector<double> equilibrium_positions(const CrystalConfig& crystal, double stiffness) {
    crystal.validate();
    if (crystal.size() == 1) return {0.0};
    if (!(stiffness > 0.0)) throw DomainError("equilibrium_positions: stiffness must be positive");
    const double k_coul = coulomb_strength(crystal);
    if (!(k_coul > 0.0)) throw DomainError("equilibrium_positions: ions must repel");
    // Force balance k1 z1 = -F, k2 z2 = F with F = C/d^2 gives d^3 = C (1/k1 + 1/k2).
    const auto [k1, k2] = stiffnesses(crystal, stiffness);
    const double d = std::cbrt(k_coul * (1.0 / k1 + 1.0 / k2));
    const double f = k_coul / (d * d);
    return {-f / k1, f / k2};
}

ModePair two_ion_eigenfrequencies(double mu, double omega_ref) {
    if (!(mu > 0.0)) throw DomainError("two_ion_eigenfrequencies: mu must be positive");
    if (!(omega_ref > 0.0)) throw DomainError("two_ion_eigenfrequencies: omega_ref must be positive");
    const double x = 1.0 / mu;
    const double root = std::sqrt(1.0 + x * x - x);
    const double w2 = omega_ref * omega_ref;
    return {std::sqrt(w2 * (1.0 + x - root)), std::sqrt(w2 * (1.0 + x + root))};
}

NormalModes normal_modes(const CrystalConfig& crystal, double stiffness) {
    crystal.validate();
    const double m0 = crystal.species[0].mass;
    if (crystal.size() == 1) return {{std::sqrt(stiffness / m0)}, {{1.0, 0.0}}};

    const auto z = equilibrium_positions(crystal, stiffness);
    const double d = z[1] - z[0];
    const double curv = 2.0 * coulomb_strength(crystal) / (d * d * d);
    const auto [k1, k2] = stiffnesses(crystal, stiffness);
    const double m1 = crystal.species[0].mass;
    const double m2 = crystal.species[1].mass;

    // Mass-weighted Hessian [[a, b], [b, cc]].
    const double a = (k1 + curv) / m1;
    const double cc = (k2 + curv) / m2;
    const double b = -curv / std::sqrt(m1 * m2);
    const double mean = 0.5 * (a + cc);
    const double half_gap = std::hypot(0.5 * (a - cc), b);
    const double lam[2] = {mean - half_gap, mean + half_gap};

    NormalModes modes;
    for (double l : lam) {
        std::array<double, 2> v{};
        if (std::abs(b) > 0.0) {
            // Pick the better-conditioned of the two equivalent row forms.
            if (std::abs(l - a) > std::abs(l - cc))
                v = {b, l - a};
            else
                v = {l - cc, b};
        } else {
            v = (std::abs(l - a) <= std::abs(l - cc)) ? std::array<double, 2>{1.0, 0.0}
                                                      : std::array<double, 2>{0.0, 1.0};
        }
        const double n = std::hypot(v[0], v[1]);
        v = {v[0] / n, v[1] / n};
        if (v[0] < 0.0 || (v[0] == 0.0 && v[1] < 0.0)) v = {-v[0], -v[1]};
        modes.frequencies.push_back(std::sqrt(l));
        modes.vectors.push_back(v);
    }
    return modes;
}

double heating_rate_single(const IonSpecies& species, double omega_z, double s_e) {
    if (!(omega_z > 0.0)) throw DomainError("heating_rate_single: omega_z must be positive");
    if (!(s_e >= 0.0)) throw DomainError("heating_rate_single: s_e must be >= 0");
    species.validate();
    return species.charge * species.charge * s_e / (4.0 * species.mass * c::hbar * omega_z);
}

double heating_rate_com(int n_ions, double single_rate) {
    if (n_ions < 1 || n_ions > 2) throw DomainError("heating_rate_com: n_ions must be 1 or 2");
    return n_ions * single_rate;
}

double doppler_limit_temperature(const HeatingModel& model, double gamma_z, double v_noise) {
    model.validate();
    if (gamma_z == 0.0) throw DivisionByZeroError("doppler_limit_temperature: gamma_z is zero");
    if (!(gamma_z > 0.0)) throw DomainError("doppler_limit_temperature: gamma_z must be positive");
    return (model.k_const + model.zeta * v_noise * v_noise) / (gamma_z * c::boltzmann);
}

}  // namespace iontrap
