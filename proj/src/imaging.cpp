#include "iontrap/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "iontrap/error.hpp"
#include "iontrap/faddeeva.hpp"
#include "iontrap/random.hpp"

namespace iontrap {

namespace {
constexpr double pi = std::numbers::pi;
}

AxialProfile AxialProfile::from_counts(std::vector<double> centers, std::vector<double> counts) {
    AxialProfile p{std::move(centers), std::move(counts), {}};
    p.uncertainties.reserve(p.counts.size());
    for (double c : p.counts) p.uncertainties.push_back(std::sqrt(std::max(c, 0.0)));
    return p;
}

double AxialProfile::bin_width() const {
    if (bin_centers.size() < 2) return 0.0;
    return (bin_centers.back() - bin_centers.front()) / static_cast<double>(bin_centers.size() - 1);
}

double AxialProfile::total() const { return std::accumulate(counts.begin(), counts.end(), 0.0); }

void AxialProfile::validate() const {
    if (bin_centers.size() != counts.size())
        throw DomainError("profile: bin_centers and counts differ in length");
    if (!uncertainties.empty() && uncertainties.size() != counts.size())
        throw DomainError("profile: uncertainties and counts differ in length");
    for (double c : counts)
        if (!(c >= 0.0)) throw DomainError("profile: counts must be >= 0");
    if (bin_centers.size() >= 2) {
        const double w = bin_width();
        if (!(w > 0.0)) throw DomainError("profile: bin centers must increase");
        for (std::size_t i = 1; i < bin_centers.size(); ++i) {
            const double d = bin_centers[i] - bin_centers[i - 1];
            if (std::abs(d - w) > 1e-6 * w) throw DomainError("profile: binning is not uniform");
        }
    }
}

void OpticsConfig::validate() const {
    if (!(lorentzian_fwhm > 0.0)) throw DomainError("optics: lorentzian_fwhm must be positive");
    if (!(pixel_size_effective > 0.0)) throw DomainError("optics: pixel size must be positive");
    if (!(magnification > 0.0)) throw DomainError("optics: magnification must be positive");
    if (!(photon_rate >= 0.0)) throw DomainError("optics: photon_rate must be >= 0");
    if (!(exposure >= 0.0)) throw DomainError("optics: exposure must be >= 0");
    if (pixels_axial < 1 || pixels_radial < 1) throw DomainError("optics: empty sensor");
}

void ProfileParams::validate() const {
    if (!(gamma > 0.0)) throw DomainError("profile: gamma must be positive");
    if (!(rho_max >= 0.0)) throw DomainError("profile: rho_max must be >= 0");
    if (!(a0 > 0.0)) throw DomainError("profile: a0 must be positive");
    if (!std::isfinite(z0)) throw DomainError("profile: z0 must be finite");
}

void TwoIonParams::validate() const {
    ProfileParams{gamma, z1, rho_max, a0}.validate();
    if (!std::isfinite(z2)) throw DomainError("profile: z2 must be finite");
}

void ThermalParams::validate() const {
    if (!(sigma > 0.0)) throw DomainError("thermal profile: sigma must be positive");
    if (!(gamma >= 0.0)) throw DomainError("thermal profile: gamma must be >= 0");
    if (!std::isfinite(z0)) throw DomainError("thermal profile: z0 must be finite");
}

double profile_driven_quadrature(const ProfileParams& p, double z) {
    p.validate();
    const double u = z - p.z0;
    const double hw = 0.5 * p.gamma;
    const double prefactor = p.a0 / (p.gamma * p.gamma) * p.gamma / (2.0 * pi * pi);
    if (p.rho_max == 0.0) return prefactor * pi / (hw * hw + u * u);

    auto integrand = [&](double theta) {
        const double d = p.rho_max * std::sin(theta) - u;
        return 1.0 / (hw * hw + d * d);
    };
    // Break the range geometrically around the Lorentzian peak so that every
    // piece is smooth on its own scale.
    const double half_pi = pi / 2.0;
    const double s = u / p.rho_max;
    const double centre = std::abs(s) < 1.0 ? std::asin(s) : std::copysign(half_pi, s);
    const double curvature_scale = std::sqrt((std::max(std::abs(u) - p.rho_max, 0.0) + hw) / p.rho_max);
    const double width = std::min(hw / (p.rho_max * std::max(std::cos(centre), 1e-300)), curvature_scale);
    std::vector<double> cuts{-half_pi, centre, half_pi};
    for (double d = width; d < pi; d *= 4.0) {
        if (centre - d > -half_pi) cuts.push_back(centre - d);
        if (centre + d < half_pi) cuts.push_back(centre + d);
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    using boost::math::quadrature::gauss_kronrod;
    double total = 0.0, error = 0.0;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        // Each piece is mapped onto [-1, 1] so the returned error estimate is in
        // the units of the integral (the library does not rescale it).
        const double mid = 0.5 * (cuts[k] + cuts[k + 1]);
        const double half = 0.5 * (cuts[k + 1] - cuts[k]);
        auto mapped = [&](double x) { return half * integrand(mid + half * x); };
        double err = 0.0;
        total += gauss_kronrod<double, 31>::integrate(mapped, -1.0, 1.0, 8, 1e-12, &err);
        error += err;
    }
    if (!(error <= 1e-10 * std::abs(total)))
        throw ConvergenceError("profile quadrature did not reach 1e-10 relative tolerance");
    return prefactor * total;
}

double profile_driven_closed(const ProfileParams& p, double z) {
    p.validate();
    const double g = p.gamma;
    const double u = z - p.z0;
    if (p.rho_max == 0.0) {
        const double hw = 0.5 * g;
        return p.a0 / (g * g) * (hw / pi) / (hw * hw + u * u);
    }
    const std::complex<double> i(0.0, 1.0);
    const std::complex<double> w = 2.0 * u / g + i;
    const std::complex<double> inner = 1.0 - g * g * w * w / (4.0 * p.rho_max * p.rho_max);
    const double im = std::imag(i / std::sqrt(inner));
    return 2.0 / (pi * g * g) * p.a0 / (2.0 * p.rho_max) * im;
}

double profile_thermal(double sigma_thermal, double gamma, double z0, double a0, double z) {
    ThermalParams{sigma_thermal, gamma, z0, a0}.validate();
    const double s2 = sigma_thermal * std::numbers::sqrt2;
    const std::complex<double> arg((z - z0) / s2, 0.5 * gamma / s2);
    return a0 * faddeeva(arg).real() / (sigma_thermal * std::sqrt(2.0 * pi));
}

double profile_thermal(const ThermalParams& p, double z) {
    return profile_thermal(p.sigma, p.gamma, p.z0, p.a0, z);
}

double two_ion_profile(const TwoIonParams& p, double z) {
    return profile_driven_closed({p.gamma, p.z1, p.rho_max, p.a0}, z) +
           profile_driven_closed({p.gamma, p.z2, p.rho_max, p.a0}, z);
}

double density(const ProfileModel& model, double z) {
    return std::visit(
        [z](const auto& p) -> double {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, ProfileParams>)
                return profile_driven_closed(p, z);
            else if constexpr (std::is_same_v<T, TwoIonParams>)
                return two_ion_profile(p, z);
            else
                return profile_thermal(p, z);
        },
        model);
}

double profile_integral(const ProfileModel& model) {
    return std::visit(
        [](const auto& p) -> double {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, ProfileParams>)
                return p.a0 / (p.gamma * p.gamma);
            else if constexpr (std::is_same_v<T, TwoIonParams>)
                return 2.0 * p.a0 / (p.gamma * p.gamma);
            else
                return p.a0;
        },
        model);
}

int emitters(const ProfileModel& model) {
    return std::holds_alternative<TwoIonParams>(model) ? 2 : 1;
}

std::vector<double> axial_pixel_centers(const OpticsConfig& optics) {
    std::vector<double> c(optics.pixels_axial);
    const double mid = 0.5 * static_cast<double>(optics.pixels_axial - 1);
    for (std::size_t j = 0; j < c.size(); ++j)
        c[j] = optics.center + (static_cast<double>(j) - mid) * optics.pixel_size_effective;
    return c;
}

std::vector<double> expected_axial_counts(const ProfileModel& model, const OpticsConfig& optics) {
    optics.validate();
    const double norm = profile_integral(model);
    const double photons = optics.exposure * optics.photon_rate * emitters(model);
    const auto centers = axial_pixel_centers(optics);
    const double half = 0.5 * optics.pixel_size_effective;
    std::vector<double> out(centers.size());
    for (std::size_t j = 0; j < centers.size(); ++j) {
        const double integral = boost::math::quadrature::gauss<double, 8>::integrate(
            [&](double z) { return density(model, z); }, centers[j] - half, centers[j] + half);
        out[j] = photons * integral / norm;
    }
    return out;
}

std::vector<double> expected_axial_counts(const Trajectory& traj, const OpticsConfig& optics,
                                          double settle_fraction, std::size_t max_samples) {
    optics.validate();
    const std::size_t k0 = traj.settle_index(settle_fraction);
    if (traj.samples() <= k0) throw InsufficientDataError("render: no samples after settle point");
    const std::size_t avail = traj.samples() - k0;
    const std::size_t step = std::max<std::size_t>(1, (avail + max_samples - 1) / std::max<std::size_t>(1, max_samples));

    const auto centers = axial_pixel_centers(optics);
    const double half = 0.5 * optics.pixel_size_effective;
    const double hw = 0.5 * optics.lorentzian_fwhm;
    std::vector<double> edges(centers.size() + 1);
    for (std::size_t j = 0; j < centers.size(); ++j) edges[j] = centers[j] - half;
    edges.back() = centers.back() + half;

    std::vector<double> acc(centers.size(), 0.0);
    std::vector<double> cdf(edges.size());
    std::size_t used = 0;
    for (std::size_t k = k0; k < traj.samples(); k += step, ++used)
        for (std::size_t i = 0; i < traj.ions(); ++i) {
            const double zi = traj.positions[i][k];
            for (std::size_t e = 0; e < edges.size(); ++e) cdf[e] = std::atan((edges[e] - zi) / hw);
            for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += (cdf[j + 1] - cdf[j]) / pi;
        }
    const double photons = optics.exposure * optics.photon_rate;
    for (double& a : acc) a *= photons / static_cast<double>(used);
    return acc;
}

AxialProfile expected_profile(const std::vector<double>& expected, const OpticsConfig& optics) {
    return AxialProfile::from_counts(axial_pixel_centers(optics), expected);
}

RenderResult render_image(const std::vector<double>& expected_axial, const OpticsConfig& optics,
                          std::uint64_t seed) {
    optics.validate();
    if (expected_axial.size() != optics.pixels_axial)
        throw DomainError("render: expected counts do not match the sensor width");
    // Radial spread: Gaussian with the PSF's FWHM.
    const double sigma_r = optics.lorentzian_fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
    const double mid = 0.5 * static_cast<double>(optics.pixels_radial - 1);
    std::vector<double> frac(optics.pixels_radial);
    for (std::size_t r = 0; r < frac.size(); ++r) {
        const double c = (static_cast<double>(r) - mid) * optics.pixel_size_effective;
        const double a = (c - 0.5 * optics.pixel_size_effective) / (sigma_r * std::numbers::sqrt2);
        const double b = (c + 0.5 * optics.pixel_size_effective) / (sigma_r * std::numbers::sqrt2);
        frac[r] = 0.5 * (std::erf(b) - std::erf(a));
    }

    RenderResult out;
    out.expected = expected_axial;
    out.image.width = optics.pixels_axial;
    out.image.height = optics.pixels_radial;
    out.image.pixels.resize(out.image.width * out.image.height);
    RandomStream rng(derive_seed(seed, 0));
    std::vector<double> column(optics.pixels_axial, 0.0);
    for (std::size_t r = 0; r < optics.pixels_radial; ++r)
        for (std::size_t j = 0; j < optics.pixels_axial; ++j) {
            const auto n = rng.poisson(expected_axial[j] * frac[r]);
            const auto clipped = static_cast<std::uint32_t>(std::min<std::uint64_t>(n, 0xffffffffULL));
            out.image.pixels[r * optics.pixels_axial + j] = clipped;
            column[j] += static_cast<double>(clipped);
        }
    out.projection = AxialProfile::from_counts(axial_pixel_centers(optics), std::move(column));
    return out;
}

RenderResult render_image(const ProfileModel& model, const OpticsConfig& optics, std::uint64_t seed) {
    return render_image(expected_axial_counts(model, optics), optics, seed);
}

RenderResult render_image(const Trajectory& traj, const OpticsConfig& optics, std::uint64_t seed,
                          double settle_fraction) {
    return render_image(expected_axial_counts(traj, optics, settle_fraction), optics, seed);
}

double profile_fwhm(const std::vector<double>& z, const std::vector<double>& y) {
    if (z.size() != y.size() || z.size() < 3) throw DomainError("profile_fwhm: need >= 3 samples");
    const auto top = std::max_element(y.begin(), y.end());
    const double half = 0.5 * *top;
    std::size_t lo = 0, hi = y.size() - 1;
    while (lo < y.size() && y[lo] < half) ++lo;
    while (hi > 0 && y[hi] < half) --hi;
    auto cross = [&](std::size_t a, std::size_t b) {
        if (y[b] == y[a]) return z[a];
        return z[a] + (half - y[a]) * (z[b] - z[a]) / (y[b] - y[a]);
    };
    const double left = lo == 0 ? z.front() : cross(lo - 1, lo);
    const double right = hi + 1 == y.size() ? z.back() : cross(hi, hi + 1);
    return right - left;
}

}  // namespace iontrap
