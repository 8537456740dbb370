#include "iontrap/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "iontrap/constants.hpp"
#include "iontrap/error.hpp"
#include "iontrap/hash.hpp"
#include "iontrap/random.hpp"

namespace iontrap {

namespace c = constants;

void DriveSpec::validate() const {
    if (!(f_e >= 0.0) || !std::isfinite(f_e)) throw DomainError("drive: f_e must be >= 0");
    if (!(omega_dip >= 0.0) || !std::isfinite(omega_dip))
        throw DomainError("drive: omega_dip must be >= 0");
    if (!std::isfinite(phase)) throw DomainError("drive: phase must be finite");
}

double NoiseSpec::thermal_psd(double mass, double gamma_z, double temperature) {
    return 8.0 * mass * gamma_z * c::boltzmann * temperature;
}

void NoiseSpec::validate() const {
    if (!(psd_per_v2 >= 0.0)) throw DomainError("noise: psd_per_v2 must be >= 0");
    if (!(background_psd >= 0.0)) throw DomainError("noise: background_psd must be >= 0");
    if (!std::isfinite(v_noise)) throw DomainError("noise: v_noise must be finite");
}

std::size_t Trajectory::settle_index(double settle_fraction) const {
    if (times.empty()) return 0;
    const double t_settle = times.front() + settle_fraction * (times.back() - times.front());
    return static_cast<std::size_t>(
        std::lower_bound(times.begin(), times.end(), t_settle) - times.begin());
}

double default_time_step(const CrystalConfig& crystal, const TrapConfig& trap, SimMode mode) {
    (void)crystal;
    const double w = (mode == SimMode::full_mathieu) ? trap.omega_rf : secular_frequency(trap);
    if (!(w > 0.0)) throw DomainError("cannot choose a time step: no trap frequency");
    return c::two_pi / w / 200.0;
}

double max_relevant_frequency(const CrystalConfig& crystal, const TrapConfig& trap,
                              const DriveSpec& drive, SimMode mode) {
    const double k = axial_stiffness(trap, crystal.species[0], crystal.species[0].charge);
    const auto modes = normal_modes(crystal, k);
    double f = *std::max_element(modes.frequencies.begin(), modes.frequencies.end());
    f = std::max(f, drive.omega_dip);
    if (mode == SimMode::full_mathieu) f = std::max(f, trap.omega_rf);
    return f;
}

double resolve_time_step(const CrystalConfig& crystal, const TrapConfig& trap,
                         const DriveSpec& drive, const SimConfig& sim) {
    const double dt = sim.dt > 0.0 ? sim.dt : default_time_step(crystal, trap, sim.mode);
    const double limit = c::two_pi / (100.0 * max_relevant_frequency(crystal, trap, drive, sim.mode));
    if (dt > limit * (1.0 + 1e-12))
        throw DomainError("sim: dt = " + std::to_string(dt) + " s exceeds 2pi/(100 f_max) = " +
                          std::to_string(limit) + " s");
    return dt;
}

namespace {

std::uint64_t fingerprint(const CrystalConfig& crystal, const TrapConfig& trap,
                          const DriveSpec& drive, const NoiseSpec& noise, const SimConfig& sim,
                          double dt) {
    Fnv1a h;
    for (const auto& s : crystal.species) h.value(s.mass).value(s.charge).text(s.label);
    h.value(crystal.gamma_z);
    h.value(trap.omega_rf).value(trap.q_z).value(trap.a_z);
    h.value(drive.f_e).value(drive.omega_dip).value(drive.phase);
    h.value(noise.v_noise).value(noise.psd_per_v2).value(noise.background_psd);
    h.value(static_cast<int>(noise.correlation));
    h.value(dt).value(sim.duration).value(static_cast<int>(sim.mode)).value(sim.record_stride);
    for (double x : sim.initial_offset) h.value(x);
    for (double x : sim.initial_velocity) h.value(x);
    return h.digest();
}

/// Unit phasor advanced by a fixed angle per step, re-synchronized with
/// exact cos/sin periodically to bound round-off growth.
class Phasor {
public:
    Phasor(double omega, double phase, double dt)
        : omega_(omega), phase_(phase), dt_(dt), rc_(std::cos(omega * dt)), rs_(std::sin(omega * dt)) {
        sync(0);
    }
    double cos() const noexcept { return c_; }
    void advance(std::size_t next_step) {
        if ((next_step & 4095u) == 0) {
            sync(next_step);
            return;
        }
        const double cn = c_ * rc_ - s_ * rs_;
        s_ = s_ * rc_ + c_ * rs_;
        c_ = cn;
    }

private:
    void sync(std::size_t step) {
        const double arg = omega_ * dt_ * static_cast<double>(step) + phase_;
        c_ = std::cos(arg);
        s_ = std::sin(arg);
    }
    double omega_, phase_, dt_, rc_, rs_;
    double c_ = 1.0, s_ = 0.0;
};

}  // namespace

Trajectory simulate(const CrystalConfig& crystal, const TrapConfig& trap, const DriveSpec& drive,
                    const NoiseSpec& noise, const SimConfig& sim) {
    crystal.validate();
    trap.validate();
    drive.validate();
    noise.validate();
    if (!(sim.duration > 0.0)) throw DomainError("sim: duration must be positive");
    const double dt = resolve_time_step(crystal, trap, drive, sim);
    const auto steps = static_cast<std::size_t>(std::llround(sim.duration / dt));
    if (steps < 1) throw DomainError("sim: duration shorter than one step");
    const std::size_t stride = std::max<std::size_t>(1, sim.record_stride);
    const std::size_t n = crystal.size();
    if (!sim.initial_offset.empty() && sim.initial_offset.size() != n)
        throw DomainError("sim: initial_offset needs one entry per ion");
    if (!sim.initial_velocity.empty() && sim.initial_velocity.size() != n)
        throw DomainError("sim: initial_velocity needs one entry per ion");

    const IonSpecies& ref = crystal.species[0];
    const bool mathieu = sim.mode == SimMode::full_mathieu;
    const double k_ref = axial_stiffness(trap, ref, ref.charge);
    const auto z_eq = equilibrium_positions(crystal, k_ref);

    double mass[2] = {0, 0}, k_static[2] = {0, 0}, k_rf[2] = {0, 0}, force[2] = {0, 0};
    double sig_corr[2] = {0, 0}, sig_ind[2] = {0, 0};
    double z[2] = {0, 0}, v[2] = {0, 0};
    const double rf_scale = ref.mass * trap.omega_rf * trap.omega_rf / 4.0;
    const double field_var = noise.field_psd() * dt / 2.0;
    const double bg_var = noise.background_psd * dt / 2.0;
    const bool correlated = noise.correlation == NoiseCorrelation::correlated;
    for (std::size_t i = 0; i < n; ++i) {
        const double qr = crystal.species[i].charge / ref.charge;
        mass[i] = crystal.species[i].mass;
        if (mathieu) {
            k_static[i] = rf_scale * trap.a_z * qr;
            k_rf[i] = -2.0 * rf_scale * trap.q_z * qr;
        } else {
            k_static[i] = k_ref * qr;
        }
        force[i] = drive.f_e * qr;
        // Impulse standard deviations per step, divided by mass to give velocity kicks.
        sig_corr[i] = correlated ? std::sqrt(field_var) * std::abs(qr) / mass[i] : 0.0;
        const double ind_var = (correlated ? 0.0 : field_var) + bg_var;
        sig_ind[i] = std::sqrt(ind_var) * std::abs(qr) / mass[i];
        z[i] = z_eq[i] + (sim.initial_offset.empty() ? 0.0 : sim.initial_offset[i]);
        v[i] = sim.initial_velocity.empty() ? 0.0 : sim.initial_velocity[i];
    }
    const double coul = n == 2 ? crystal.species[0].charge * crystal.species[1].charge /
                                     (4.0 * c::pi * c::vacuum_permittivity)
                               : 0.0;
    const double damp = 1.0 / (1.0 + 2.0 * crystal.gamma_z * dt);

    std::optional<RandomStream> shared;
    std::optional<RandomStream> own[2];
    if (sig_corr[0] > 0.0) shared.emplace(derive_seed(sim.seed, 0));
    for (std::size_t i = 0; i < n; ++i)
        if (sig_ind[i] > 0.0) own[i].emplace(derive_seed(sim.seed, 1 + i));

    Phasor drive_phase(drive.omega_dip, drive.phase, dt);
    Phasor rf_phase(trap.omega_rf, 0.0, dt);
    const bool driven = drive.f_e > 0.0;

    Trajectory traj;
    traj.mode = sim.mode;
    traj.dt = dt;
    traj.record_stride = stride;
    traj.config_id = fingerprint(crystal, trap, drive, noise, sim, dt);
    const std::size_t n_rec = steps / stride + 1;
    traj.times.reserve(n_rec);
    traj.positions.assign(n, {});
    traj.velocities.assign(n, {});
    auto record = [&](std::size_t step) {
        traj.times.push_back(static_cast<double>(step) * dt);
        for (std::size_t i = 0; i < n; ++i) {
            traj.positions[i].push_back(z[i]);
            traj.velocities[i].push_back(v[i]);
        }
    };
    for (std::size_t i = 0; i < n; ++i) {
        traj.positions[i].reserve(n_rec);
        traj.velocities[i].reserve(n_rec);
    }
    record(0);

    for (std::size_t step = 0; step < steps; ++step) {
        const double drive_cos = driven ? drive_phase.cos() : 0.0;
        const double rf_cos = mathieu ? rf_phase.cos() : 0.0;
        const double kick = shared ? shared->normal() : 0.0;
        double coul_force = 0.0;
        if (n == 2) {
            const double d = z[1] - z[0];
            if (!(d > collision_distance))
                throw CollisionError("ions collided at t = " + std::to_string(step * dt) + " s");
            coul_force = coul / (d * d);
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double k = k_static[i] + k_rf[i] * rf_cos;
            double f = -k * z[i] + force[i] * drive_cos;
            if (n == 2) f += (i == 0 ? -coul_force : coul_force);
            double dv = dt * f / mass[i] + sig_corr[i] * kick;
            if (own[i]) dv += sig_ind[i] * own[i]->normal();
            v[i] = (v[i] + dv) * damp;
            z[i] += dt * v[i];
            if (!(std::abs(z[i]) < runaway_distance))
                throw InstabilityError("ion " + std::to_string(i) + " ran away at t = " +
                                       std::to_string((step + 1) * dt) + " s");
        }
        if (driven) drive_phase.advance(step + 1);
        if (mathieu) rf_phase.advance(step + 1);
        if ((step + 1) % stride == 0) record(step + 1);
    }
    return traj;
}

std::vector<double> total_energy(const Trajectory& traj, const CrystalConfig& crystal,
                                 const TrapConfig& trap) {
    if (traj.mode != SimMode::secular)
        throw InputKindError("total_energy: secular-mode trajectory required");
    const IonSpecies& ref = crystal.species[0];
    const double k_ref = axial_stiffness(trap, ref, ref.charge);
    const std::size_t n = traj.ions();
    const double coul = n == 2 ? crystal.species[0].charge * crystal.species[1].charge /
                                     (4.0 * c::pi * c::vacuum_permittivity)
                               : 0.0;
    std::vector<double> e(traj.samples(), 0.0);
    for (std::size_t s = 0; s < traj.samples(); ++s) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double k = k_ref * crystal.species[i].charge / ref.charge;
            const double zi = traj.positions[i][s];
            const double vi = traj.velocities[i][s];
            sum += 0.5 * crystal.species[i].mass * vi * vi + 0.5 * k * zi * zi;
        }
        if (n == 2) sum += coul / (traj.positions[1][s] - traj.positions[0][s]);
        e[s] = sum;
    }
    return e;
}

}  // namespace iontrap
