#include "doctest.h"

#include <cmath>
#include <random>

#include <boost/math/tools/minima.hpp>

#include "iontrap/constants.hpp"
#include "iontrap/error.hpp"
#include "iontrap/fitting.hpp"
#include "iontrap/physics.hpp"
#include "iontrap/random.hpp"

using namespace iontrap;
namespace c = iontrap::constants;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

std::vector<double> pixel_grid(std::size_t n = 128, double pitch = 2.4e-6) {
    std::vector<double> z(n);
    for (std::size_t j = 0; j < n; ++j) z[j] = (static_cast<double>(j) - 0.5 * (n - 1)) * pitch;
    return z;
}

AxialProfile noiseless(const ProfileModel& m, const std::vector<double>& z) {
    return AxialProfile::from_counts(z, binned_model(m, z, z[1] - z[0]));
}

AxialProfile poisson(const ProfileModel& m, const std::vector<double>& z, std::uint64_t seed) {
    auto expected = binned_model(m, z, z[1] - z[0]);
    RandomStream rng(seed);
    for (double& e : expected) e = static_cast<double>(rng.poisson(e));
    return AxialProfile::from_counts(z, expected);
}

// a0 that puts `total` counts into the single-ion profile.
double a0_for(double total, double gamma) { return total * gamma * gamma; }

ResonanceScan make_scan(double f_e, double mass, double wz, double gamma, double span, int n) {
    ResonanceScan s;
    for (int k = 0; k < n; ++k) {
        const double w = wz - span + 2.0 * span * k / (n - 1);
        s.frequencies.push_back(w);
        s.rho_max.push_back(resonance_amplitude(f_e, mass, wz, gamma, w));
    }
    return s;
}

}  // namespace

TEST_CASE("single-ion profile fit recovers noiseless parameters") {
    const auto z = pixel_grid();
    for (const auto& truth : {ProfileParams{6e-6, 1.3e-6, 10e-6, a0_for(1e5, 6e-6)},
                              ProfileParams{5e-6, -4e-6, 2e-6, a0_for(3e4, 5e-6)},
                              ProfileParams{7e-6, 0.0, 25e-6, a0_for(1e5, 7e-6)}}) {
        const auto fit = fit_profile_single(noiseless(ProfileModel{truth}, z));
        CHECK(fit.converged);
        CHECK(rel(fit.param("gamma"), truth.gamma) < 1e-6);
        CHECK(std::abs(fit.param("z0") - truth.z0) < 1e-6 * truth.gamma);
        CHECK(rel(fit.param("rho_max"), truth.rho_max) < 1e-6);
        CHECK(rel(fit.param("a0"), truth.a0) < 1e-6);
        CHECK(fit.residuals.size() == z.size());
        for (std::size_t k = 1; k < fit.objective_history.size(); ++k)
            CHECK(fit.objective_history[k] < fit.objective_history[k - 1]);
    }
}

TEST_CASE("fixing rho at zero gives the pure Lorentzian fit") {
    const auto z = pixel_grid();
    const auto data = poisson(ProfileModel{ProfileParams{6e-6, 1e-6, 0.0, a0_for(5e4, 6e-6)}}, z, 3);
    ProfileFitOptions<ProfileParams> opt;
    opt.initial = ProfileParams{5e-6, 0.0, 0.0, a0_for(4e4, 5e-6)};
    opt.fixed = {"rho_max"};

    // Independent Lorentzian model: cumulative arctangent differences per pixel.
    const double w = z[1] - z[0];
    auto lorentz = [&](bool poisson) -> ResidualFunction {
        return [&, poisson](const Eigen::VectorXd& x) {
            Eigen::VectorXd r(static_cast<Eigen::Index>(z.size()));
            const double hw = 0.5 * std::abs(x[0]);
            for (std::size_t j = 0; j < z.size(); ++j) {
                const double m = x[2] / c::pi *
                                 (std::atan((z[j] + 0.5 * w - x[1]) / hw) - std::atan((z[j] - 0.5 * w - x[1]) / hw));
                const double y = data.counts[j];
                double v = (y - m) / data.uncertainties[j];
                if (poisson) {
                    const double dev = 2.0 * (m - y + (y > 0.0 ? y * std::log(y / m) : 0.0));
                    v = (y >= m ? 1.0 : -1.0) * std::sqrt(std::max(dev, 0.0));
                }
                r[static_cast<Eigen::Index>(j)] = v;
            }
            return r;
        };
    };
    for (bool poisson : {true, false}) {
        INFO("poisson = " << poisson);
        opt.poisson = poisson;
        const auto fit = fit_profile_single(data, opt);
        CHECK(fit.param("rho_max") == 0.0);
        CHECK(fit.uncertainty("rho_max") == 0.0);
        CHECK(fit.dof == z.size() - 3);
        const auto ref = levenberg_marquardt(lorentz(poisson), Eigen::Vector3d(5e-6, 0.0, 4e4),
                                             Eigen::Vector3d(5e-6, 5e-6, 4e4));
        CHECK(rel(fit.param("gamma"), std::abs(ref.x[0])) < 1e-5);
        CHECK(std::abs(fit.param("z0") - ref.x[1]) < 1e-5 * 6e-6);
        CHECK(rel(fit.param("a0") / (fit.param("gamma") * fit.param("gamma")), ref.x[2]) < 1e-5);
        CHECK(rel(fit.chi2, ref.objective) < 1e-6);
    }
}

TEST_CASE("single-ion fit on Poisson data stays within 3 sigma") {
    const auto z = pixel_grid();
    const ProfileParams truth{6e-6, 0.0, 10e-6, a0_for(1e5, 6e-6)};
    int inside = 0;
    const int reps = 200;
    for (int r = 0; r < reps; ++r) {
        const auto fit = fit_profile_single(poisson(ProfileModel{truth}, z, derive_seed(11, r)));
        const double t[4] = {truth.gamma, truth.z0, truth.rho_max, truth.a0};
        bool ok = true;
        for (int k = 0; k < 4; ++k) ok = ok && std::abs(fit.params[k] - t[k]) < 3.0 * fit.uncertainties[k];
        inside += ok;
    }
    CHECK(inside >= 190);
}

TEST_CASE("two-ion profile fit") {
    const auto z = pixel_grid();
    const double g = 6e-6;
    SUBCASE("noiseless round trip") {
        const TwoIonParams truth{g, -15.1e-6, 15.1e-6, 4e-6, a0_for(5e4, g)};
        const auto fit = fit_profile_two_ion(noiseless(ProfileModel{truth}, z));
        CHECK(rel(fit.param("gamma"), g) < 1e-6);
        CHECK(std::abs(fit.param("z1") - truth.z1) < 1e-6 * g);
        CHECK(std::abs(fit.param("z2") - truth.z2) < 1e-6 * g);
        CHECK(rel(fit.param("rho_max"), truth.rho_max) < 1e-6);
        CHECK(rel(fit.param("a0"), truth.a0) < 1e-6);
        CHECK(fit.derived_value("separation") == doctest::Approx(30.2e-6).epsilon(1e-6));
        CHECK(fit.derived_value("z0") == doctest::Approx(15.1e-6).epsilon(1e-6));
    }
    SUBCASE("separation at 1e5 counts") {
        const TwoIonParams truth{g, -15e-6, 15e-6, 3e-6, a0_for(5e4, g)};
        for (int r = 0; r < 10; ++r) {
            const auto fit = fit_profile_two_ion(poisson(ProfileModel{truth}, z, derive_seed(21, r)));
            CHECK(std::abs(fit.derived_value("separation") - 30e-6) < 0.1e-6);
            CHECK(fit.param("z1") < fit.param("z2"));
        }
    }
    SUBCASE("merged lobes") {
        const TwoIonParams truth{g, -15e-6, 15e-6, 35e-6, a0_for(5e4, g)};
        const auto fit = fit_profile_two_ion(poisson(ProfileModel{truth}, z, 5));
        CHECK(fit.converged);
        CHECK(fit.chi2_per_dof < 2.0);
    }
    SUBCASE("coincident ions") {
        const TwoIonParams truth{g, 2e-6, 2e-6, 5e-6, a0_for(5e4, g)};
        const auto fit = fit_profile_two_ion(poisson(ProfileModel{truth}, z, 8));
        CHECK(fit.derived_value("separation") >= 0.0);
        CHECK(fit.derived_value("separation") < 3.0 * fit.derived_uncertainty("separation") + 0.3e-6);
    }
}

TEST_CASE("thermal profile fit") {
    const auto z = pixel_grid();
    const ThermalParams truth{4.3e-6, 6e-6, -2e-6, 8e4};
    const auto fit = fit_profile_thermal(noiseless(ProfileModel{truth}, z));
    CHECK(rel(fit.param("sigma"), truth.sigma) < 1e-6);
    CHECK(rel(fit.param("gamma"), truth.gamma) < 1e-6);
    CHECK(std::abs(fit.param("z0") - truth.z0) < 1e-6 * truth.gamma);
    CHECK(rel(fit.param("a0"), truth.a0) < 1e-6);
}

TEST_CASE("profile fit input checks") {
    const auto z = pixel_grid();
    CHECK_THROWS_AS(fit_profile_single(AxialProfile::from_counts(z, std::vector<double>(z.size(), 50.0))),
                    DegenerateDataError);
    std::vector<double> sparse(z.size(), 0.0);
    for (int k = 60; k < 65; ++k) sparse[k] = 1000.0;
    CHECK_THROWS_AS(fit_profile_single(AxialProfile::from_counts(z, sparse)), InsufficientDataError);
    ProfileFitOptions<ProfileParams> bad;
    bad.fixed = {"rho_max"};
    CHECK_THROWS_AS(fit_profile_single(noiseless(ProfileModel{ProfileParams{6e-6, 0, 1e-6, 1e-6}}, z), bad),
                    DomainError);
}

TEST_CASE("resonance fit") {
    const auto ca = IonSpecies::ca40();
    const double wz = c::two_pi * 79.7e3, gamma = 309.0, f_e = 2e-22;
    SUBCASE("noiseless scan is recovered exactly") {
        const auto scan = make_scan(f_e, ca.mass, wz, gamma, c::two_pi * 300.0, 25);
        const auto fit = fit_resonance(scan, ca.mass);
        CHECK(rel(fit.param("f_e"), f_e) < 1e-8);
        CHECK(rel(fit.param("omega_z"), wz) < 1e-8);
        CHECK(rel(fit.param("gamma_z"), gamma) < 1e-8);
        for (std::size_t k = 1; k < fit.objective_history.size(); ++k)
            CHECK(fit.objective_history[k] < fit.objective_history[k - 1]);
    }
    SUBCASE("wide scan without half-maximum crossings") {
        const auto scan = make_scan(f_e, ca.mass, wz, gamma, c::two_pi * 80.0, 25);
        const auto fit = fit_resonance(scan, ca.mass);
        CHECK(rel(fit.param("gamma_z"), gamma) < 1e-8);
    }
    SUBCASE("peak sits at sqrt(omega_z^2 - 2 gamma^2)") {
        // Strong damping makes the shift visible.
        const double g2 = 2e4;
        const auto scan = make_scan(f_e, ca.mass, wz, g2, c::two_pi * 20e3, 41);
        const auto fit = fit_resonance(scan, ca.mass);
        const double fw = fit.param("omega_z"), fg = fit.param("gamma_z");
        auto neg = [&](double w) { return -resonance_amplitude(fit.param("f_e"), ca.mass, fw, fg, w); };
        const auto peak = boost::math::tools::brent_find_minima(neg, 0.8 * fw, 1.2 * fw, 50);
        CHECK(rel(peak.first, std::sqrt(fw * fw - 2.0 * fg * fg)) < 1e-6);
    }
    SUBCASE("flat or edge-peaked scans are not bracketed") {
        auto flat = make_scan(f_e, ca.mass, wz, gamma, c::two_pi * 300.0, 25);
        for (auto& r : flat.rho_max) r = 1e-9;
        flat.rho_max[10] = 1.0001e-9;
        flat.uncertainties.assign(25, 1e-10);
        CHECK_THROWS_AS(fit_resonance(flat, ca.mass), NotBracketedError);
        // Scan entirely below the resonance: the maximum is the last point.
        auto edge = make_scan(f_e, ca.mass, wz, gamma, c::two_pi * 300.0, 25);
        for (std::size_t k = 0; k < 25; ++k) {
            edge.frequencies[k] -= c::two_pi * 400.0;
            edge.rho_max[k] = resonance_amplitude(f_e, ca.mass, wz, gamma, edge.frequencies[k]);
        }
        CHECK_THROWS_AS(fit_resonance(edge, ca.mass), NotBracketedError);
    }
    SUBCASE("weighted noisy scans give unit-width pulls") {
        const auto clean = make_scan(f_e, ca.mass, wz, gamma, c::two_pi * 250.0, 25);
        std::mt19937_64 rng(44);
        std::normal_distribution<double> nd;
        double sum2 = 0.0;
        const int reps = 200;
        for (int r = 0; r < reps; ++r) {
            auto scan = clean;
            scan.uncertainties.assign(25, 0.02 * clean.rho_max[12]);
            for (auto& v : scan.rho_max) v += scan.uncertainties[0] * nd(rng);
            const auto fit = fit_resonance(scan, ca.mass);
            REQUIRE(std::isfinite(fit.uncertainty("gamma_z")));
            REQUIRE(fit.uncertainty("gamma_z") > 0.0);
            const double pull = (fit.param("gamma_z") - gamma) / fit.uncertainty("gamma_z");
            sum2 += pull * pull;
        }
        CHECK(std::sqrt(sum2 / reps) == doctest::Approx(1.0).epsilon(0.15));
    }
    SUBCASE("joint fit shares the drive force") {
        const auto one = make_scan(f_e, ca.mass, wz, 309.0, c::two_pi * 300.0, 25);
        const auto two = make_scan(f_e, ca.mass, wz, 354.0, c::two_pi * 300.0, 25);
        const auto fit = fit_resonance_joint(one, ca.mass, two, ca.mass);
        CHECK(rel(fit.param("f_e"), f_e) < 1e-8);
        CHECK(rel(fit.param("gamma_z_1"), 309.0) < 1e-8);
        CHECK(rel(fit.param("gamma_z_2"), 354.0) < 1e-8);
    }
}

TEST_CASE("noise line fit") {
    NoiseSweep s;
    for (int k = 0; k < 8; ++k) {
        s.v2.push_back(1e-4 * k);
        s.sigma2.push_back(2e-12 + 3e-9 * s.v2.back());
    }
    const auto fit = fit_noise_line(s);
    CHECK(fit.param("c0") == doctest::Approx(2e-12).epsilon(1e-10));
    CHECK(fit.param("c1") == doctest::Approx(3e-9).epsilon(1e-10));
    CHECK(fit.r_squared == doctest::Approx(1.0));
    CHECK_THROWS_AS(fit_noise_line(s, 0.0, 2.5e-4), InsufficientDataError);

    NoiseSweep t = s;
    for (auto& v : t.sigma2) v = 2e-12 + 6e-9 * t.v2[&v - t.sigma2.data()];
    t.uncertainties.assign(t.v2.size(), 1e-14);
    const auto ratio = slope_ratio(fit_noise_line(t), fit);
    CHECK(ratio.value == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(ratio.uncertainty >= 0.0);
}

TEST_CASE("plateau detection") {
    auto three_segment = [](double x) {
        if (x < 1e-3) return 1e-12 + 4e-9 * x;
        if (x < 4e-3) return 1e-12 + 4e-12;
        return 5e-12 + 1e-9 * (x - 4e-3);
    };
    SUBCASE("synthetic breakpoints are recovered") {
        NoiseSweep s;
        RandomStream rng(17);
        for (int k = 0; k < 30; ++k) {
            s.v2.push_back(2.5e-4 * k);
            s.uncertainties.push_back(0.1e-12);
            s.sigma2.push_back(three_segment(s.v2.back()) + 0.1e-12 * rng.normal());
        }
        const auto p = detect_plateau(s);
        CHECK(p.plateau_found);
        CHECK(p.segments == 3);
        CHECK(p.breakpoint_low == doctest::Approx(1e-3).epsilon(0.2));
        CHECK(p.breakpoint_high == doctest::Approx(4e-3).epsilon(0.2));
        CHECK(std::abs(p.slopes[1]) < 0.1 * p.slopes[0]);
    }
    SUBCASE("noiseless breakpoints are exact") {
        NoiseSweep s;
        for (int k = 0; k < 30; ++k) {
            s.v2.push_back(2.5e-4 * k + 1.1e-4);
            s.sigma2.push_back(three_segment(s.v2.back()));
        }
        const auto p = detect_plateau(s);
        CHECK(p.breakpoint_low == doctest::Approx(1e-3).epsilon(1e-6));
        CHECK(p.breakpoint_high == doctest::Approx(4e-3).epsilon(1e-6));
    }
    SUBCASE("a straight line is one segment") {
        NoiseSweep s;
        for (int k = 0; k < 20; ++k) {
            s.v2.push_back(1e-4 * k);
            s.sigma2.push_back(1e-12 + 2e-9 * s.v2.back());
        }
        const auto p = detect_plateau(s);
        CHECK_FALSE(p.plateau_found);
        CHECK(p.segments == 1);
        CHECK(p.slopes[0] == doctest::Approx(2e-9));
    }
    SUBCASE("constant data is flagged degenerate") {
        NoiseSweep s;
        for (int k = 0; k < 15; ++k) {
            s.v2.push_back(1e-4 * k);
            s.sigma2.push_back(3e-12);
        }
        const auto p = detect_plateau(s);
        CHECK(p.degenerate);
        CHECK(p.plateau_found);
    }
    SUBCASE("too few points") {
        NoiseSweep s{{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, {}};
        CHECK_THROWS_AS(detect_plateau(s), InsufficientDataError);
    }
}

TEST_CASE("mass ratio inversion") {
    const double w = c::two_pi * 79.7e3;
    CHECK(invert_mass_ratio(w, w).mu == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(invert_mass_ratio(std::sqrt(3.0) * w, w, ModeBranch::plus).mu == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(invert_mass_ratio(0.5494 * w, w).mu == doctest::Approx(187.0 / 40.0).epsilon(1e-3));

    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> ul(std::log(0.1), std::log(100.0));
    for (int i = 0; i < 200; ++i) {
        const double mu = std::exp(ul(rng));
        const auto m = two_ion_eigenfrequencies(mu, w);
        CHECK(rel(invert_mass_ratio(m.minus, w).mu, mu) < 1e-8);
        CHECK(rel(invert_mass_ratio(m.plus, w, ModeBranch::plus).mu, mu) < 1e-8);
    }
    const auto est = invert_mass_ratio(0.5494 * w, w, ModeBranch::minus, 1e-4 * w);
    const double up = invert_mass_ratio(0.5495 * w, w).mu, down = invert_mass_ratio(0.5493 * w, w).mu;
    CHECK(est.uncertainty == doctest::Approx(0.5 * std::abs(up - down)).epsilon(1e-3));
    CHECK_THROWS_AS(invert_mass_ratio(1.3 * w, w), OutOfRangeError);
    CHECK_THROWS_AS(invert_mass_ratio(1.3 * w, w, ModeBranch::plus), OutOfRangeError);
    CHECK_THROWS_AS(invert_mass_ratio(-w, w), OutOfRangeError);
}
