#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "iontrap/physics.hpp"
#include "iontrap/profile.hpp"
#include "iontrap/trajectory.hpp"

namespace iontrap {

/// Spatially uniform dipolar force F_e cos(omega_dip t + phase) on a
/// species[0]-charged ion; other ions see it scaled by their charge.
struct DriveSpec {
    double f_e = 0.0;        // N
    double omega_dip = 0.0;  // rad/s
    double phase = 0.0;      // rad
    void validate() const;
};

enum class NoiseCorrelation { correlated, independent };

/// White force noise. The applied-field part has single-sided force PSD
/// psd_per_v2 * v_noise^2 and follows `correlation`; the background part
/// (recoil floor of the cooling laser) is always independent per ion.
/// PSDs refer to a species[0]-charged ion and scale with (Q_i/Q_0)^2.
struct NoiseSpec {
    double v_noise = 0.0;         // V (peak-to-peak)
    double psd_per_v2 = 0.0;      // N^2 Hz^-1 V^-2, calibration constant
    double background_psd = 0.0;  // N^2 Hz^-1
    NoiseCorrelation correlation = NoiseCorrelation::correlated;

    double field_psd() const noexcept { return psd_per_v2 * v_noise * v_noise; }
    double force_psd() const noexcept { return background_psd + field_psd(); }

    /// Single-sided force PSD 8 m gamma k_B T that holds an ion of mass m
    /// at temperature T under damping gamma.
    static double thermal_psd(double mass, double gamma_z, double temperature);
    void validate() const;
};

struct SimConfig {
    /// Integration step; 0 selects 1/200 of the secular (or RF) period.
    double dt = 0.0;
    double duration = 0.0;
    std::uint64_t seed = 0;
    SimMode mode = SimMode::secular;
    std::size_t ensemble_size = 1;
    std::size_t record_stride = 1;
    double settle_fraction = 0.5;
    /// Per-ion start offsets from equilibrium (m) and start velocities; empty = at rest in equilibrium.
    std::vector<double> initial_offset;
    std::vector<double> initial_velocity;
};

/// Distance below which two ions are considered collided.
inline constexpr double collision_distance = 1e-9;
/// Any coordinate beyond this (m) is treated as a runaway.
inline constexpr double runaway_distance = 1e-2;

/// Default step (1/200 of the shortest drive-relevant period).
double default_time_step(const CrystalConfig& crystal, const TrapConfig& trap, SimMode mode);
/// Highest frequency the integrator must resolve (modes, drive, RF).
double max_relevant_frequency(const CrystalConfig& crystal, const TrapConfig& trap,
                              const DriveSpec& drive, SimMode mode);
/// Step actually used for this configuration (resolves dt = 0). Throws
/// DomainError if the step violates dt <= 2 pi / (100 f_max).
double resolve_time_step(const CrystalConfig& crystal, const TrapConfig& trap,
                         const DriveSpec& drive, const SimConfig& sim);

/// Integrates the axial equations of motion with semi-implicit Euler and
/// per-step stochastic kicks. In secular mode the well is the static
/// pseudopotential m omega_z^2; in full-Mathieu mode it is the RF + DC
/// potential (omega_rf^2/4)(a_z - 2 q_z cos omega_rf t).
///
/// Random streams: stream 0 of derive_seed(sim.seed, .) carries the
/// correlated field noise, stream 1 + i the independent noise of ion i.
Trajectory simulate(const CrystalConfig& crystal, const TrapConfig& trap, const DriveSpec& drive,
                    const NoiseSpec& noise, const SimConfig& sim);

/// Total mechanical energy (kinetic, trap, Coulomb) at every sample; secular mode only.
std::vector<double> total_energy(const Trajectory& traj, const CrystalConfig& crystal,
                                 const TrapConfig& trap);

/// Least-squares fit of z(t) - offset = I cos(w t) + Q sin(w t) on the post-settle window.
struct Demodulation {
    double in_phase = 0.0;
    double quadrature = 0.0;
    double amplitude() const;
};

Demodulation demodulate(const Trajectory& traj, double omega, double settle_fraction = 0.5,
                        std::size_t ion = 0);

/// Amplitude of the omega_dip component after the settle point. Requires the
/// window to span at least 20 drive cycles (InsufficientDataError).
double steady_state_amplitude(const Trajectory& traj, double omega_dip,
                              double settle_fraction = 0.5, std::size_t ion = 0);

struct EnsembleStats {
    std::size_t members = 0;
    std::vector<double> mean_position;      // m, per ion
    std::vector<double> sigma2;             // m^2, per ion
    std::vector<double> sigma2_err;         // m^2, standard error over members
    std::vector<double> mode_frequency;     // rad/s, lowest (COM) first
    std::vector<double> mode_sigma2;        // m^2, variance of normalized mode coordinate
    std::vector<double> mode_sigma2_err;
    std::vector<double> temperature;        // K, per mode, m_0 omega_k^2 sigma_k^2 / k_B
    double rho_max = 0.0;                   // m, coherent drive amplitude of ion 0 (0 without drive)
    double com_energy_rate = 0.0;           // J/s, slope of mean COM mode energy vs time
};

/// Per-trajectory sufficient statistics. Reducible in any grouping; the
/// ensemble helpers reduce in member order for bit-identical results.
struct MemberMoments {
    std::uint64_t config_id = 0;
    std::size_t count = 0;
    std::vector<double> sum;        // per ion
    std::vector<double> sum_sq;     // per ion
    std::vector<double> mode_sum;   // per mode
    std::vector<double> mode_sum_sq;
    Demodulation drive;
    std::vector<double> com_energy; // per sample over the whole trajectory
    std::vector<double> times;
};

MemberMoments member_moments(const Trajectory& traj, const CrystalConfig& crystal,
                             const TrapConfig& trap, const DriveSpec& drive,
                             double settle_fraction = 0.5);
EnsembleStats combine_moments(const std::vector<MemberMoments>& members,
                              const CrystalConfig& crystal, const TrapConfig& trap);

/// Statistics over >= 2 trajectories of one configuration (ConfigMismatchError otherwise).
EnsembleStats ensemble_stats(const std::vector<Trajectory>& trajs, const CrystalConfig& crystal,
                             const TrapConfig& trap, double settle_fraction = 0.5,
                             const DriveSpec& drive = {});

/// Runs sim.ensemble_size members (member i seeded with derive_seed(sim.seed, i))
/// and maps each trajectory through `reduce`, preserving member order.
template <typename R>
std::vector<R> run_ensemble(const CrystalConfig& crystal, const TrapConfig& trap,
                            const DriveSpec& drive, const NoiseSpec& noise, const SimConfig& sim,
                            const std::function<R(const Trajectory&)>& reduce);

/// Noise/drive response of an ensemble, reduced on the fly.
EnsembleStats simulate_ensemble_stats(const CrystalConfig& crystal, const TrapConfig& trap,
                                      const DriveSpec& drive, const NoiseSpec& noise,
                                      const SimConfig& sim);

/// Coherent response of one ion at the drive frequency: ensemble-averaged
/// quadratures, with the standard error from the member scatter.
struct DriveResponse {
    double rho = 0.0;
    double rho_err = 0.0;
};

DriveResponse simulate_drive_response(const CrystalConfig& crystal, const TrapConfig& trap,
                                      const DriveSpec& drive, const NoiseSpec& noise,
                                      const SimConfig& sim, std::size_t ion = 0);

/// RMS RF-frequency motion amplitude over RMS secular displacement from the
/// trap center, from per-RF-period local fits. Full-Mathieu trajectories only.
double micromotion_ratio(const Trajectory& traj, const TrapConfig& trap,
                         double settle_fraction = 0.5, std::size_t ion = 0);

/// (mean peak height - valley) / mean peak height for the two dominant lobes
/// of the profile; 0 when no statistically significant valley exists.
double lobe_distinguishability(const AxialProfile& profile);

}  // namespace iontrap

#include "iontrap/detail/ensemble_impl.hpp"
