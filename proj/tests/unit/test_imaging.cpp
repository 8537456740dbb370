#include "doctest.h"

#include <cmath>
#include <complex>
#include <random>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/tools/roots.hpp>

#include "iontrap/constants.hpp"
#include "iontrap/dynamics.hpp"
#include "iontrap/error.hpp"
#include "iontrap/faddeeva.hpp"
#include "iontrap/fitting.hpp"
#include "iontrap/imaging.hpp"

using namespace iontrap;
namespace c = iontrap::constants;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

// Direct Gaussian x Lorentzian convolution, normalized to one.
double voigt_by_quadrature(double sigma, double gamma, double u) {
    const double hw = 0.5 * gamma;
    auto f = [&](double s) {
        const double g = std::exp(-0.5 * s * s / (sigma * sigma)) / (sigma * std::sqrt(2.0 * c::pi));
        const double l = hw / c::pi / (hw * hw + (u - s) * (u - s));
        return g * l;
    };
    double err = 0.0;
    const double lim = 12.0 * sigma;
    const double lo = std::min(-lim, u - lim), hi = std::max(lim, u + lim);
    const double total = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, lo, u, 15, 1e-12, &err) +
            boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, u, hi, 15, 1e-12, &err);
    return total;
}

double half_width(const std::function<double(double)>& f) {
    const double half = 0.5 * f(0.0);
    boost::math::tools::eps_tolerance<double> tol(50);
    std::uintmax_t it = 200;
    double hi = 1e-9;
    while (f(hi) > half) hi *= 2.0;
    const auto r = boost::math::tools::bisect([&](double x) { return f(x) - half; }, 0.0, hi, tol, it);
    return 0.5 * (r.first + r.second);
}

}  // namespace

TEST_CASE("faddeeva function against reference values") {
    struct Ref {
        std::complex<double> z, w;
    };
    const Ref refs[] = {
        {{0.3, 0.01}, {0.90463532833083975, 0.31349158639684871}},
        {{2.0, 0.5}, {0.10335882374136666, 0.28478588475009375}},
        {{0.0, 0.001}, {0.99887262008115141, 0.0}},
        {{5.5, 0.2}, {0.003926610434945383, 0.10421659175868454}},
        {{0.1, 3.0}, {0.17884242969019377, 0.0054327498088566461}},
        {{30.0, 0.4}, {0.00025112519061735964, 0.018813430931074402}},
        {{0.001, 0.0001}, {0.99988617230868393, 0.0011281784376085887}},
    };
    for (const auto& r : refs) {
        const auto w = faddeeva(r.z);
        CHECK(std::abs(w - r.w) < 1e-12 * std::abs(r.w));
    }
    // Reflection to the lower half plane: w(conj z) = conj(w(-z)).
    const std::complex<double> z(0.7, 0.4);
    CHECK(std::abs(faddeeva(std::conj(z)) - std::conj(faddeeva(-z))) < 1e-12);
}

TEST_CASE("closed-form driven profile equals the quadrature") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> ug(1e-6, 10e-6), ur(0.1e-6, 20e-6), uz(-1.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
        const ProfileParams p{ug(rng), 3e-6, ur(rng), 2.0};
        const double span = 5.0 * (p.rho_max + p.gamma);
        for (int k = 0; k < 41; ++k) {
            const double z = p.z0 + span * (k < 40 ? uz(rng) : 0.0);
            worst = std::max(worst, rel(profile_driven_closed(p, z), profile_driven_quadrature(p, z)));
        }
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("driven profile limits and symmetry") {
    const double g = 6e-6;
    SUBCASE("rho = gamma at the center") {
        const ProfileParams p{g, 0.0, g, 1.0};
        CHECK(rel(profile_driven_closed(p, 0.0), profile_driven_quadrature(p, 0.0)) < 1e-8);
    }
    SUBCASE("vanishing amplitude gives a Lorentzian of width gamma") {
        const ProfileParams p{g, 1e-6, 0.0, 1.0};
        const double hw = 0.5 * g;
        for (double u : {0.0, 2e-6, 7e-6, 40e-6}) {
            const double lor = (hw / c::pi) / (hw * hw + u * u) / (g * g);
            CHECK(rel(profile_driven_closed(p, 1e-6 + u), lor) < 1e-14);
            CHECK(rel(profile_driven_quadrature(p, 1e-6 + u), lor) < 1e-10);
            const ProfileParams tiny{g, 1e-6, 1e-12, 1.0};
            CHECK(rel(profile_driven_closed(tiny, 1e-6 + u), lor) < 1e-8);
        }
    }
    SUBCASE("vanishing PSF gives the arcsine density") {
        const double rho = 10e-6, gt = 1e-8;
        const ProfileParams p{gt, 0.0, rho, 1.0};
        for (double u : {0.0, 3e-6, -6e-6, 8e-6}) {
            const double arcsine = 1.0 / (c::pi * std::sqrt(rho * rho - u * u));
            CHECK(rel(gt * gt * profile_driven_closed(p, u), arcsine) < 1e-3);
            CHECK(rel(gt * gt * profile_driven_quadrature(p, u), arcsine) < 1e-3);
        }
    }
    SUBCASE("symmetric about z0") {
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> ud(0.0, 40e-6);
        const ProfileParams p{g, 2e-6, 9e-6, 1.0};
        for (int i = 0; i < 100; ++i) {
            const double d = ud(rng);
            CHECK(rel(profile_driven_closed(p, 2e-6 + d), profile_driven_closed(p, 2e-6 - d)) < 1e-12);
        }
    }
    SUBCASE("two horns near z0 +- rho for a narrow PSF") {
        const ProfileParams p{0.5e-6, 0.0, 10e-6, 1.0};
        double best = 0.0, arg = 0.0;
        for (int k = 0; k <= 40000; ++k) {
            const double z = 1e-9 * k;
            const double v = profile_driven_closed(p, z);
            if (v > best) best = v, arg = z;
        }
        CHECK(std::abs(arg - 10e-6) < 0.5e-6);
        CHECK(profile_driven_closed(p, 0.0) < 0.3 * best);
    }
    CHECK_THROWS_AS(profile_driven_closed(ProfileParams{0.0, 0.0, 1e-6, 1.0}, 0.0), DomainError);
    CHECK_THROWS_AS(profile_driven_closed(ProfileParams{1e-6, 0.0, -1e-6, 1.0}, 0.0), DomainError);
}

TEST_CASE("profile integral is a0 / gamma^2") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> ug(1e-6, 10e-6), ur(0.0, 20e-6);
    boost::math::quadrature::tanh_sinh<double> ts;
    for (int i = 0; i < 20; ++i) {
        const double g = ug(rng), r = ur(rng);
        for (double a0 : {1.0, 3.5}) {
            const ProfileParams p{g, 0.0, r, a0};
            // Map z = s / (1 - s^2) onto s in (-1, 1) for the slowly decaying tails.
            auto f = [&](double s) {
                const double d = 1.0 - s * s;
                return profile_driven_closed(p, g * s / d) * g * (1.0 + s * s) / (d * d);
            };
            const double integral = ts.integrate(f, -1.0, 1.0);
            CHECK(rel(integral * g * g / a0, 1.0) < 1e-6);
            CHECK(rel(profile_integral(ProfileModel{p}), integral) < 1e-6);
        }
    }
}

TEST_CASE("profiles are nonnegative") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> ug(0.5e-6, 10e-6), ur(0.0, 30e-6), uz(-100e-6, 100e-6);
    for (int i = 0; i < 2000; ++i) {
        const double g = ug(rng), r = ur(rng), z = uz(rng);
        CHECK(profile_driven_closed(ProfileParams{g, 0.0, r, 1.0}, z) >= 0.0);
        CHECK(profile_thermal(ug(rng), g, 0.0, 1.0, z) >= 0.0);
        CHECK(two_ion_profile(TwoIonParams{g, -15e-6, 15e-6, r, 1.0}, z) >= 0.0);
    }
}

TEST_CASE("thermal profile is a normalized Voigt shape") {
    for (auto [s, g] : {std::pair{4.3e-6, 6e-6}, std::pair{5.7e-6, 6e-6}, std::pair{1e-6, 8e-6},
                        std::pair{9e-6, 0.5e-6}}) {
        for (double u : {0.0, 2e-6, 9e-6, 30e-6})
            CHECK(rel(profile_thermal(s, g, 0.0, 1.0, u), voigt_by_quadrature(s, g, u)) < 1e-6);
        const double hw = half_width([&](double u) { return profile_thermal(s, g, 0.0, 1.0, u); });
        const double hw_ref = half_width([&](double u) { return voigt_by_quadrature(s, g, u); });
        CHECK(rel(hw, hw_ref) < 1e-6);
    }
    SUBCASE("limits") {
        const double s = 4e-6;
        for (double u : {0.0, 3e-6, 8e-6}) {
            const double gauss = std::exp(-0.5 * u * u / (s * s)) / (s * std::sqrt(2.0 * c::pi));
            CHECK(rel(profile_thermal(s, 0.0, 0.0, 1.0, u), gauss) < 1e-12);
            const double g = 6e-6, hw = 3e-6;
            const double lor = (hw / c::pi) / (hw * hw + u * u);
            CHECK(rel(profile_thermal(1e-10, g, 0.0, 1.0, u), lor) < 1e-6);
        }
        CHECK(profile_thermal(s, 6e-6, 1e-6, 2.5, 1e-6) ==
              doctest::Approx(2.5 * profile_thermal(s, 6e-6, 0.0, 1.0, 0.0)));
        CHECK_THROWS_AS(profile_thermal(0.0, 6e-6, 0.0, 1.0, 0.0), DomainError);
    }
}

TEST_CASE("two-ion profile") {
    const double g = 6e-6;
    SUBCASE("coincident ions double the single profile") {
        for (double z : {-5e-6, 0.0, 4e-6})
            CHECK(two_ion_profile(TwoIonParams{g, 1e-6, 1e-6, 3e-6, 1.0}, z) ==
                  doctest::Approx(2.0 * profile_driven_closed(ProfileParams{g, 1e-6, 3e-6, 1.0}, z)));
    }
    SUBCASE("30 um apart with small amplitude is bimodal") {
        const TwoIonParams p{g, -15e-6, 15e-6, 1e-6, 1.0};
        CHECK(two_ion_profile(p, 15e-6) > 5.0 * two_ion_profile(p, 0.0));
        CHECK(two_ion_profile(p, 15e-6) > two_ion_profile(p, 14e-6));
        CHECK(two_ion_profile(p, 15e-6) > two_ion_profile(p, 16e-6));
    }
    SUBCASE("amplitude near half the separation fills the gap") {
        const TwoIonParams p{g, -15e-6, 15e-6, 15e-6, 1.0};
        double peak = 0.0;
        for (int k = -300; k <= 300; ++k) peak = std::max(peak, two_ion_profile(p, 1e-7 * k));
        CHECK(two_ion_profile(p, 0.0) > 0.5 * peak);
    }
}

TEST_CASE("image rendering") {
    OpticsConfig optics;
    const ProfileModel model = ProfileParams{6e-6, 0.0, 10e-6, 1.0};
    SUBCASE("zero photon rate gives an empty image") {
        optics.photon_rate = 0.0;
        const auto r = render_image(model, optics, 1);
        CHECK(std::all_of(r.image.pixels.begin(), r.image.pixels.end(), [](auto v) { return v == 0; }));
    }
    SUBCASE("total counts follow Poisson statistics") {
        const double n = optics.exposure * optics.photon_rate;
        const auto expected = expected_axial_counts(model, optics);
        const double sum = std::accumulate(expected.begin(), expected.end(), 0.0);
        CHECK(sum == doctest::Approx(n).epsilon(0.02));  // tails beyond the sensor are lost
        const auto r = render_image(model, optics, 77);
        CHECK(std::abs(r.projection.total() - n) < 3.0 * std::sqrt(n) + (n - sum));
        CHECK(r.image.width == optics.pixels_axial);
        CHECK(r.image.height == optics.pixels_radial);
    }
    SUBCASE("fixed seed is bit-exact, new seed differs") {
        const auto a = render_image(model, optics, 5);
        const auto b = render_image(model, optics, 5);
        const auto d = render_image(model, optics, 6);
        CHECK(a.image.pixels == b.image.pixels);
        CHECK(a.image.pixels != d.image.pixels);
    }
    SUBCASE("two-ion model emits twice the photons") {
        const auto one = expected_axial_counts(model, optics);
        const auto two = expected_axial_counts(ProfileModel{TwoIonParams{6e-6, -15e-6, 15e-6, 1e-6, 1.0}}, optics);
        CHECK(std::accumulate(two.begin(), two.end(), 0.0) ==
              doctest::Approx(2.0 * std::accumulate(one.begin(), one.end(), 0.0)).epsilon(0.01));
    }
}

TEST_CASE("time-averaged trajectory rendering reproduces the driven profile") {
    const auto ca = IonSpecies::ca40();
    const double wz = c::two_pi * 80e3, gamma = 309.0;
    const CrystalConfig crystal{{ca}, gamma};
    const auto trap = TrapConfig::from_secular(c::two_pi * 1.47e6, 0.25, wz);
    const double rho_target = 10e-6;
    const DriveSpec drive{rho_target * ca.mass * 2.0 * gamma * wz, wz, 0.0};
    SimConfig sim;
    sim.duration = 0.05;
    sim.record_stride = 7;
    const auto traj = simulate(crystal, trap, drive, NoiseSpec{}, sim);
    const double rho = steady_state_amplitude(traj, wz, 0.7);
    CHECK(rho == doctest::Approx(rho_target).epsilon(0.01));

    OpticsConfig optics;
    const auto rendered = render_image(traj, optics, 42, 0.7);
    const auto model = expected_axial_counts(ProfileModel{ProfileParams{optics.lorentzian_fwhm, 0.0, rho, 1.0}}, optics);
    double chi2 = 0.0;
    std::size_t used = 0;
    for (std::size_t j = 0; j < model.size(); ++j) {
        if (model[j] < 1.0) continue;
        const double d = rendered.projection.counts[j] - model[j];
        chi2 += d * d / model[j];
        ++used;
    }
    CHECK(chi2 / static_cast<double>(used) < 1.5);
}

TEST_CASE("profile fwhm") {
    std::vector<double> z, y;
    for (int k = -200; k <= 200; ++k) {
        z.push_back(0.1 * k);
        y.push_back(1.0 / (1.0 + z.back() * z.back()));
    }
    CHECK(profile_fwhm(z, y) == doctest::Approx(2.0).epsilon(1e-3));
}
