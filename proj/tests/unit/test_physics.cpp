#include "doctest.h"

#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>
#include <boost/math/tools/minima.hpp>

#include "iontrap/constants.hpp"
#include "iontrap/error.hpp"
#include "iontrap/physics.hpp"

using namespace iontrap;
namespace c = iontrap::constants;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

// Brute-force two-ion potential minimum: V(d) = k d^2 / 4 + C / d for a symmetric pair.
double separation_by_minimization(double mass, double omega) {
    const double k = mass * omega * omega;
    const double coul = c::elementary_charge * c::elementary_charge / (4.0 * c::pi * c::vacuum_permittivity);
    auto v = [&](double d) { return k * d * d / 4.0 + coul / d; };
    const auto r = boost::math::tools::brent_find_minima(v, 1e-7, 1e-3, 60);
    return r.first;
}

// Eigenvalues of M^-1/2 K M^-1/2 with K = k [[2,-1],[-1,2]], masses (1, mu), k = omega^2.
std::pair<double, double> diagonalized(double mu, double omega) {
    Eigen::Matrix2d k;
    k << 2.0, -1.0, -1.0, 2.0;
    k *= omega * omega;
    Eigen::Matrix2d minv = Eigen::Vector2d(1.0, 1.0 / std::sqrt(mu)).asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(minv * k * minv);
    return {std::sqrt(es.eigenvalues()[0]), std::sqrt(es.eigenvalues()[1])};
}

}  // namespace

TEST_CASE("secular frequency of the reference operating point") {
    const double w_rf = c::two_pi * 1.47e6;
    CHECK(secular_frequency(w_rf, 0.0, 0.25) / c::two_pi == doctest::Approx(129930.871).epsilon(1e-8));
    CHECK(secular_frequency(w_rf, 0.0, 0.0) == 0.0);

    const auto trap = TrapConfig::from_secular(w_rf, 0.25, c::two_pi * 80e3);
    CHECK(trap.a_z == doctest::Approx(-0.0194030843629969).epsilon(1e-10));
    CHECK(secular_frequency(trap) / c::two_pi == doctest::Approx(80e3).epsilon(1e-12));

    const auto from_v = TrapConfig::from_voltages(w_rf, 730.0, -11.5);
    CHECK(from_v.q_z == doctest::Approx(0.25));
    CHECK(secular_frequency(from_v) / c::two_pi == doctest::Approx(80e3).epsilon(1e-9));
}

TEST_CASE("secular frequency increases with |q| at fixed a >= 0") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> ua(0.0, 0.05), uq(0.01, 0.4);
    for (int i = 0; i < 200; ++i) {
        const double a = ua(rng), q1 = uq(rng), q2 = uq(rng);
        const double lo = std::min(q1, q2), hi = std::max(q1, q2);
        CHECK(secular_frequency(1e7, a, lo) <= secular_frequency(1e7, a, hi));
        CHECK(secular_frequency(1e7, a, -hi) == secular_frequency(1e7, a, hi));
    }
}

TEST_CASE("unstable or invalid traps are rejected") {
    TrapConfig t;
    t.omega_rf = 1e7;
    t.q_z = 0.1;
    t.a_z = -0.01;
    CHECK_THROWS_AS(t.validate(), UnstableConfinementError);
    t.a_z = -0.004;
    CHECK_NOTHROW(t.validate());
    t.omega_rf = 0.0;
    CHECK_THROWS_AS(t.validate(), DomainError);
}

TEST_CASE("equilibrium separation of two calcium ions") {
    const auto ca = IonSpecies::ca40();
    CHECK(ca.mass == doctest::Approx(39.962590863 * c::atomic_mass_unit - c::electron_mass).epsilon(1e-14));
    const double d = equilibrium_separation(ca, c::two_pi * 80e3);
    CHECK(d == doctest::Approx(30.1915378742e-6).epsilon(1e-9));
    CHECK(rel(d, 30e-6) < 0.01);
}

TEST_CASE("separation agrees with a numerical potential minimum") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> um(10.0, 250.0), uf(20e3, 500e3);
    for (int i = 0; i < 50; ++i) {
        const auto ion = IonSpecies::singly_charged(um(rng), "X");
        const double w = c::two_pi * uf(rng);
        CHECK(rel(equilibrium_separation(ion, w), separation_by_minimization(ion.mass, w)) < 1e-3);
    }
}

TEST_CASE("equilibrium positions balance trap and Coulomb forces") {
    const auto ca = IonSpecies::ca40();
    const auto re = IonSpecies::lookup("Re187");
    const double k = ca.mass * std::pow(c::two_pi * 80e3, 2);
    for (const auto& crystal : {CrystalConfig{{ca, ca}, 0.0}, CrystalConfig{{ca, re}, 0.0}}) {
        const auto z = equilibrium_positions(crystal, k);
        const double d = z[1] - z[0];
        const double coul = c::elementary_charge * c::elementary_charge / (4.0 * c::pi * c::vacuum_permittivity);
        CHECK(std::abs(-k * z[0] - coul / (d * d)) < 1e-12 * k * d);
        CHECK(std::abs(-k * z[1] + coul / (d * d)) < 1e-12 * k * d);
    }
    CHECK(equilibrium_positions(CrystalConfig{{ca}, 0.0}, k) == std::vector<double>{0.0});
}

TEST_CASE("two-ion eigenfrequencies match 2x2 diagonalization") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> ul(std::log(0.1), std::log(100.0));
    const double w = c::two_pi * 79.7e3;
    for (int i = 0; i < 100; ++i) {
        const double mu = std::exp(ul(rng));
        const auto m = two_ion_eigenfrequencies(mu, w);
        const auto [lo, hi] = diagonalized(mu, w);
        CHECK(rel(m.minus, lo) < 1e-10);
        CHECK(rel(m.plus, hi) < 1e-10);
    }
}

TEST_CASE("eigenfrequency special cases") {
    const double w = c::two_pi * 79.7e3;
    const auto equal = two_ion_eigenfrequencies(1.0, w);
    CHECK(equal.minus == doctest::Approx(w).epsilon(1e-14));
    CHECK(equal.plus == doctest::Approx(std::sqrt(3.0) * w).epsilon(1e-14));

    const auto re = two_ion_eigenfrequencies(187.0 / 40.0, w);
    CHECK(re.minus / w == doctest::Approx(0.549404264266592).epsilon(1e-12));
    CHECK(re.minus / c::two_pi == doctest::Approx(43787.52).epsilon(1e-6));
    CHECK(re.minus < w);

    // Heavy partner: the soft mode goes to zero like sqrt(3/(2 mu)), the other to sqrt(2).
    const auto heavy = two_ion_eigenfrequencies(1e6, w);
    CHECK(heavy.minus / w == doctest::Approx(std::sqrt(1.5e-6)).epsilon(1e-5));
    CHECK(heavy.plus / w == doctest::Approx(std::sqrt(2.0)).epsilon(1e-5));
    CHECK_THROWS_AS(two_ion_eigenfrequencies(0.0, w), DomainError);
}

TEST_CASE("normal modes of the configured crystal") {
    const auto ca = IonSpecies::ca40();
    const double w = c::two_pi * 80e3;
    const double k = ca.mass * w * w;
    const auto eq = normal_modes(CrystalConfig{{ca, ca}, 0.0}, k);
    REQUIRE(eq.frequencies.size() == 2);
    CHECK(eq.frequencies[0] == doctest::Approx(w).epsilon(1e-12));
    CHECK(eq.frequencies[1] == doctest::Approx(std::sqrt(3.0) * w).epsilon(1e-12));
    CHECK(eq.vectors[0][0] == doctest::Approx(std::sqrt(0.5)));
    CHECK(eq.vectors[0][1] == doctest::Approx(std::sqrt(0.5)));

    const auto re = IonSpecies::lookup("Re187");
    const auto mixed = normal_modes(CrystalConfig{{ca, re}, 0.0}, k);
    const auto eq9 = two_ion_eigenfrequencies(re.mass / ca.mass, w);
    CHECK(rel(mixed.frequencies[0], eq9.minus) < 1e-10);
    CHECK(rel(mixed.frequencies[1], eq9.plus) < 1e-10);
    const auto& v0 = mixed.vectors[0];
    const auto& v1 = mixed.vectors[1];
    CHECK(std::abs(v0[0] * v1[0] + v0[1] * v1[1]) < 1e-12);
}

TEST_CASE("heating rates") {
    const auto ca = IonSpecies::ca40();
    const double rate = heating_rate_single(ca, c::two_pi * 80e3, 1e-12);
    CHECK(rate == doctest::Approx(1824.39136293406).epsilon(1e-10));
    CHECK(heating_rate_com(1, rate) == rate);
    CHECK(heating_rate_com(2, rate) == 2.0 * rate);
    CHECK_THROWS_AS(heating_rate_com(3, rate), DomainError);
    CHECK(heating_rate_single(ca, c::two_pi * 80e3, 2e-12) == doctest::Approx(2.0 * rate));
}

TEST_CASE("doppler limit with noise") {
    HeatingModel h{0.0, 2e-20, 1e-21};
    const double t0 = doppler_limit_temperature(h, 300.0, 0.0);
    CHECK(t0 == doctest::Approx(1e-21 / (300.0 * c::boltzmann)));
    CHECK(doppler_limit_temperature(h, 300.0, 0.1) == doctest::Approx((1e-21 + 2e-22) / (300.0 * c::boltzmann)));
    CHECK_THROWS_AS(doppler_limit_temperature(h, 0.0, 0.1), DivisionByZeroError);
}

TEST_CASE("species lookup") {
    CHECK(IonSpecies::lookup("Re187").mass / IonSpecies::ca40().mass == doctest::Approx(187.0 / 40.0).epsilon(2e-3));
    CHECK_THROWS_AS(IonSpecies::lookup("Xx1"), DomainError);
}

TEST_CASE("physics functions are pure") {
    const auto ca = IonSpecies::ca40();
    CHECK(equilibrium_separation(ca, 5e5) == equilibrium_separation(ca, 5e5));
    const auto a = two_ion_eigenfrequencies(2.5, 5e5);
    const auto b = two_ion_eigenfrequencies(2.5, 5e5);
    CHECK(a.minus == b.minus);
    CHECK(a.plus == b.plus);
}
