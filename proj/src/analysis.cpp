#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/Dense>

#include "iontrap/constants.hpp"
#include "iontrap/dynamics.hpp"
#include "iontrap/error.hpp"

namespace iontrap {

namespace c = constants;

double Demodulation::amplitude() const { return std::hypot(in_phase, quadrature); }

Demodulation demodulate(const Trajectory& traj, double omega, double settle_fraction,
                        std::size_t ion) {
    if (ion >= traj.ions()) throw DomainError("demodulate: ion index out of range");
    const std::size_t k0 = traj.settle_index(settle_fraction);
    if (traj.samples() < k0 + 4) throw InsufficientDataError("demodulate: window too short");
    const auto& z = traj.positions[ion];
    Eigen::Matrix3d ata = Eigen::Matrix3d::Zero();
    Eigen::Vector3d atb = Eigen::Vector3d::Zero();
    for (std::size_t k = k0; k < traj.samples(); ++k) {
        const double ph = omega * traj.times[k];
        const Eigen::Vector3d row(1.0, std::cos(ph), std::sin(ph));
        ata.noalias() += row * row.transpose();
        atb.noalias() += row * z[k];
    }
    const Eigen::Vector3d sol = ata.ldlt().solve(atb);
    return {sol[1], sol[2]};
}

double steady_state_amplitude(const Trajectory& traj, double omega_dip, double settle_fraction,
                              std::size_t ion) {
    if (!(omega_dip > 0.0)) throw DomainError("steady_state_amplitude: omega_dip must be positive");
    const std::size_t k0 = traj.settle_index(settle_fraction);
    if (traj.samples() < k0 + 2) throw InsufficientDataError("steady_state_amplitude: empty window");
    const double window = traj.times.back() - traj.times[k0];
    const double cycles = omega_dip * window / c::two_pi;
    if (cycles < 20.0)
        throw InsufficientDataError("steady_state_amplitude: window covers " +
                                    std::to_string(cycles) + " drive cycles, need >= 20");
    if (omega_dip * traj.sample_interval() > c::pi / 2.0)
        throw InsufficientDataError("steady_state_amplitude: fewer than 4 samples per drive cycle");
    return demodulate(traj, omega_dip, settle_fraction, ion).amplitude();
}

namespace {

struct ModeBasis {
    std::vector<double> z_eq;
    NormalModes modes;
    std::vector<std::array<double, 2>> weights;  // q_k = sum_i weights[k][i] (z_i - z_eq_i)
};

ModeBasis mode_basis(const CrystalConfig& crystal, const TrapConfig& trap) {
    const IonSpecies& ref = crystal.species[0];
    const double k_ref = axial_stiffness(trap, ref, ref.charge);
    ModeBasis b{equilibrium_positions(crystal, k_ref), normal_modes(crystal, k_ref), {}};
    for (const auto& u : b.modes.vectors) {
        std::array<double, 2> w{};
        for (std::size_t i = 0; i < crystal.size(); ++i)
            w[i] = u[i] * std::sqrt(crystal.species[i].mass / ref.mass);
        b.weights.push_back(w);
    }
    return b;
}

double slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    if (x.size() < 2) return 0.0;
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sxy += (x[k] - mx) * (y[k] - my);
        sxx += (x[k] - mx) * (x[k] - mx);
    }
    return sxx > 0.0 ? sxy / sxx : 0.0;
}

}  // namespace

MemberMoments member_moments(const Trajectory& traj, const CrystalConfig& crystal,
                             const TrapConfig& trap, const DriveSpec& drive,
                             double settle_fraction) {
    const std::size_t n = traj.ions();
    if (n != crystal.size()) throw ConfigMismatchError("trajectory and crystal disagree on ion count");
    const ModeBasis basis = mode_basis(crystal, trap);
    const std::size_t modes = basis.modes.frequencies.size();
    const std::size_t k0 = traj.settle_index(settle_fraction);

    MemberMoments m;
    m.config_id = traj.config_id;
    m.sum.assign(n, 0.0);
    m.sum_sq.assign(n, 0.0);
    m.mode_sum.assign(modes, 0.0);
    m.mode_sum_sq.assign(modes, 0.0);
    // COM energy is kept on a decimated grid of at most ~1000 points.
    const std::size_t energy_step = std::max<std::size_t>(1, traj.samples() / 1000);

    const double m0 = crystal.species[0].mass;
    const double w0 = basis.modes.frequencies[0];
    for (std::size_t s = 0; s < traj.samples(); ++s) {
        double q[2] = {0, 0}, qd[2] = {0, 0}, dz[2] = {0, 0};
        for (std::size_t i = 0; i < n; ++i) dz[i] = traj.positions[i][s] - basis.z_eq[i];
        for (std::size_t k = 0; k < modes; ++k)
            for (std::size_t i = 0; i < n; ++i) {
                q[k] += basis.weights[k][i] * dz[i];
                qd[k] += basis.weights[k][i] * traj.velocities[i][s];
            }
        if (s % energy_step == 0) {
            m.times.push_back(traj.times[s]);
            m.com_energy.push_back(0.5 * m0 * (qd[0] * qd[0] + w0 * w0 * q[0] * q[0]));
        }
        if (s < k0) continue;
        ++m.count;
        for (std::size_t i = 0; i < n; ++i) {
            m.sum[i] += dz[i];
            m.sum_sq[i] += dz[i] * dz[i];
        }
        for (std::size_t k = 0; k < modes; ++k) {
            m.mode_sum[k] += q[k];
            m.mode_sum_sq[k] += q[k] * q[k];
        }
    }
    if (drive.f_e > 0.0 && drive.omega_dip > 0.0 && traj.samples() >= k0 + 4)
        m.drive = demodulate(traj, drive.omega_dip, settle_fraction, 0);
    return m;
}

EnsembleStats combine_moments(const std::vector<MemberMoments>& members,
                              const CrystalConfig& crystal, const TrapConfig& trap) {
    if (members.empty()) throw InsufficientDataError("ensemble statistics need at least one member");
    for (const auto& m : members)
        if (m.config_id != members.front().config_id)
            throw ConfigMismatchError("ensemble members come from different configurations");
    const ModeBasis basis = mode_basis(crystal, trap);
    const std::size_t n = crystal.size();
    const std::size_t modes = basis.modes.frequencies.size();
    const double big_m = static_cast<double>(members.size());

    // Pooled variance about the pooled mean; the standard error comes from
    // the scatter of each member's variance about that same mean.
    auto pooled = [&](auto sum_of, auto sq_of, std::size_t idx, double& mean, double& var,
                      double& err) {
        double s = 0.0, ss = 0.0, cnt = 0.0;
        for (const auto& m : members) {
            s += sum_of(m)[idx];
            ss += sq_of(m)[idx];
            cnt += static_cast<double>(m.count);
        }
        if (cnt < 2.0) throw InsufficientDataError("ensemble statistics: empty post-settle window");
        mean = s / cnt;
        var = std::max(0.0, (ss - cnt * mean * mean) / (cnt - 1.0));
        std::vector<double> per;
        for (const auto& m : members) {
            const double nm = static_cast<double>(m.count);
            per.push_back(sq_of(m)[idx] / nm - 2.0 * mean * sum_of(m)[idx] / nm + mean * mean);
        }
        const double pm = std::accumulate(per.begin(), per.end(), 0.0) / big_m;
        double sd = 0.0;
        for (double p : per) sd += (p - pm) * (p - pm);
        err = members.size() > 1 ? std::sqrt(sd / (big_m - 1.0) / big_m) : 0.0;
    };

    EnsembleStats st;
    st.members = members.size();
    for (std::size_t i = 0; i < n; ++i) {
        double mean, var, err;
        pooled([](const MemberMoments& m) -> const std::vector<double>& { return m.sum; },
               [](const MemberMoments& m) -> const std::vector<double>& { return m.sum_sq; }, i,
               mean, var, err);
        st.mean_position.push_back(basis.z_eq[i] + mean);
        st.sigma2.push_back(var);
        st.sigma2_err.push_back(err);
    }
    const double m0 = crystal.species[0].mass;
    for (std::size_t k = 0; k < modes; ++k) {
        double mean, var, err;
        pooled([](const MemberMoments& m) -> const std::vector<double>& { return m.mode_sum; },
               [](const MemberMoments& m) -> const std::vector<double>& { return m.mode_sum_sq; },
               k, mean, var, err);
        const double w = basis.modes.frequencies[k];
        st.mode_frequency.push_back(w);
        st.mode_sigma2.push_back(var);
        st.mode_sigma2_err.push_back(err);
        st.temperature.push_back(m0 * w * w * var / c::boltzmann);
    }

    double ip = 0.0, qu = 0.0;
    for (const auto& m : members) {
        ip += m.drive.in_phase;
        qu += m.drive.quadrature;
    }
    st.rho_max = std::hypot(ip / big_m, qu / big_m);

    const auto& times = members.front().times;
    std::vector<double> mean_e(times.size(), 0.0);
    for (const auto& m : members) {
        if (m.com_energy.size() != times.size())
            throw ConfigMismatchError("ensemble members have different sample grids");
        for (std::size_t s = 0; s < times.size(); ++s) mean_e[s] += m.com_energy[s] / big_m;
    }
    st.com_energy_rate = slope(times, mean_e);
    return st;
}

EnsembleStats ensemble_stats(const std::vector<Trajectory>& trajs, const CrystalConfig& crystal,
                             const TrapConfig& trap, double settle_fraction,
                             const DriveSpec& drive) {
    if (trajs.size() < 2) throw InsufficientDataError("ensemble_stats: need at least 2 trajectories");
    std::vector<MemberMoments> members;
    members.reserve(trajs.size());
    for (const auto& t : trajs) members.push_back(member_moments(t, crystal, trap, drive, settle_fraction));
    return combine_moments(members, crystal, trap);
}

EnsembleStats simulate_ensemble_stats(const CrystalConfig& crystal, const TrapConfig& trap,
                                      const DriveSpec& drive, const NoiseSpec& noise,
                                      const SimConfig& sim) {
    const auto members = run_ensemble<MemberMoments>(
        crystal, trap, drive, noise, sim, [&](const Trajectory& t) {
            return member_moments(t, crystal, trap, drive, sim.settle_fraction);
        });
    return combine_moments(members, crystal, trap);
}

DriveResponse simulate_drive_response(const CrystalConfig& crystal, const TrapConfig& trap,
                                      const DriveSpec& drive, const NoiseSpec& noise,
                                      const SimConfig& sim, std::size_t ion) {
    if (sim.ensemble_size < 2)
        throw DomainError("drive response: ensemble_size must be >= 2 for an error estimate");
    if (ion >= crystal.size()) throw DomainError("drive response: ion index out of range");
    const auto demods = run_ensemble<Demodulation>(
        crystal, trap, drive, noise, sim, [&](const Trajectory& t) {
            // Validates the window length; the quadratures are taken below.
            (void)steady_state_amplitude(t, drive.omega_dip, sim.settle_fraction, ion);
            return demodulate(t, drive.omega_dip, sim.settle_fraction, ion);
        });
    const double m = static_cast<double>(demods.size());
    double ip = 0.0, qu = 0.0;
    for (const auto& d : demods) {
        ip += d.in_phase / m;
        qu += d.quadrature / m;
    }
    const double amp = std::hypot(ip, qu);
    const double cph = amp > 0.0 ? ip / amp : 1.0;
    const double sph = amp > 0.0 ? qu / amp : 0.0;
    double var = 0.0;
    for (const auto& d : demods) {
        const double a = d.in_phase * cph + d.quadrature * sph;
        var += (a - amp) * (a - amp);
    }
    return {amp, std::sqrt(var / (m - 1.0) / m)};
}

double micromotion_ratio(const Trajectory& traj, const TrapConfig& trap, double settle_fraction,
                         std::size_t ion) {
    if (traj.mode != SimMode::full_mathieu)
        throw InputKindError("micromotion_ratio: full-Mathieu trajectory required");
    if (ion >= traj.ions()) throw DomainError("micromotion_ratio: ion index out of range");
    const double period = c::two_pi / trap.omega_rf;
    const double per_block = period / traj.sample_interval();
    if (per_block < 8.0)
        throw InsufficientDataError("micromotion_ratio: fewer than 8 samples per RF period");
    const auto block = static_cast<std::size_t>(std::llround(per_block));
    const std::size_t k0 = traj.settle_index(settle_fraction);
    const auto& z = traj.positions[ion];

    double sum_micro = 0.0, sum_secular = 0.0;
    std::size_t blocks = 0;
    for (std::size_t start = k0; start + block <= traj.samples(); start += block) {
        const double tc = 0.5 * (traj.times[start] + traj.times[start + block - 1]);
        Eigen::Matrix<double, 5, 5> ata = Eigen::Matrix<double, 5, 5>::Zero();
        Eigen::Matrix<double, 5, 1> atb = Eigen::Matrix<double, 5, 1>::Zero();
        for (std::size_t k = start; k < start + block; ++k) {
            const double tau = (traj.times[k] - tc) / period;
            const double ph = trap.omega_rf * traj.times[k];
            Eigen::Matrix<double, 5, 1> row;
            row << 1.0, tau, tau * tau, std::cos(ph), std::sin(ph);
            ata.noalias() += row * row.transpose();
            atb.noalias() += row * z[k];
        }
        const Eigen::Matrix<double, 5, 1> sol = ata.ldlt().solve(atb);
        sum_secular += sol[0] * sol[0];
        sum_micro += sol[3] * sol[3] + sol[4] * sol[4];
        ++blocks;
    }
    if (blocks < 20) throw InsufficientDataError("micromotion_ratio: fewer than 20 RF periods after settle");
    if (!(sum_secular > 0.0)) return 0.0;
    return std::sqrt(sum_micro / sum_secular);
}

double lobe_distinguishability(const AxialProfile& profile) {
    profile.validate();
    const auto& y = profile.counts;
    const std::size_t n = y.size();
    if (n < 3) return 0.0;
    std::vector<double> err = profile.uncertainties;
    if (err.size() != n) {
        err.resize(n);
        for (std::size_t i = 0; i < n; ++i) err[i] = std::sqrt(std::max(y[i], 0.0));
    }
    const double top = *std::max_element(y.begin(), y.end());
    if (!(top > 0.0)) return 0.0;

    std::vector<std::size_t> peaks;
    for (std::size_t i = 0; i < n; ++i) {
        const bool left = i == 0 || y[i] > y[i - 1];
        const bool right = i + 1 == n || y[i] >= y[i + 1];
        if (left && right) peaks.push_back(i);
    }
    if (peaks.size() < 2) return 0.0;
    const std::size_t main = static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());

    // The secondary lobe is the peak with the largest prominence relative to the main one.
    double best = 0.0, best_prominence = 0.0;
    for (std::size_t p : peaks) {
        if (p == main) continue;
        const std::size_t lo = std::min(p, main), hi = std::max(p, main);
        const auto valley_it = std::min_element(y.begin() + static_cast<long>(lo),
                                                y.begin() + static_cast<long>(hi) + 1);
        const double valley = *valley_it;
        const std::size_t vi = static_cast<std::size_t>(valley_it - y.begin());
        const double lower = std::min(y[p], y[main]);
        const double noise = 3.0 * std::hypot(err[p], err[vi]);
        if (lower - valley <= noise || lower - valley <= 0.01 * top) continue;
        if (lower - valley <= best_prominence) continue;
        best_prominence = lower - valley;
        const double mean_peak = 0.5 * (y[p] + y[main]);
        best = (mean_peak - valley) / mean_peak;
    }
    return best;
}

}  // namespace iontrap
