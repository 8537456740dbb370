#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "iontrap/profile.hpp"
#include "iontrap/trajectory.hpp"

namespace iontrap {

/// Imaging chain, all lengths in the object plane.
struct OpticsConfig {
    double lorentzian_fwhm = 6e-6;       // m, PSF width Gamma
    double magnification = 6.75;
    double pixel_size_effective = 2.4e-6;  // m
    double photon_rate = 1e5;            // detected counts/s per ion
    double exposure = 1.0;               // s
    std::size_t pixels_axial = 128;
    std::size_t pixels_radial = 16;
    double center = 0.0;                 // m, axial position of the image center

    void validate() const;
};

/// Driven single-ion profile: Lorentzian PSF over the arcsine density of a
/// harmonic oscillation of amplitude rho_max about z0.
struct ProfileParams {
    double gamma = 0.0;    // m, Lorentzian FWHM
    double z0 = 0.0;       // m
    double rho_max = 0.0;  // m
    double a0 = 1.0;       // scale; the profile integrates to a0 / gamma^2
    void validate() const;
};

/// Two driven ions with shared width, amplitude and scale.
struct TwoIonParams {
    double gamma = 0.0;
    double z1 = 0.0;
    double z2 = 0.0;
    double rho_max = 0.0;
    double a0 = 1.0;
    void validate() const;
};

/// Gaussian position spread sigma seen through the Lorentzian PSF (Voigt shape).
struct ThermalParams {
    double sigma = 0.0;
    double gamma = 0.0;
    double z0 = 0.0;
    double a0 = 1.0;  // integral of the profile
    void validate() const;
};

using ProfileModel = std::variant<ProfileParams, TwoIonParams, ThermalParams>;

/// Adaptive Gauss-Kronrod evaluation of the Lorentzian-arcsine convolution
/// after f = rho sin(theta). Same normalization as profile_driven_closed.
/// Throws ConvergenceError if the error estimate exceeds 1e-10 relative.
double profile_driven_quadrature(const ProfileParams& p, double z);

/// Closed-form driven profile
///   F(z) = 2/(pi Gamma^2) * A0/(2 rho) * Im[ i / sqrt(1 - Gamma^2 (2(z-z0)/Gamma + i)^2 / (4 rho^2)) ]
/// on the principal branch. rho_max == 0 gives the Lorentzian limit.
double profile_driven_closed(const ProfileParams& p, double z);

/// Voigt profile normalized to a0.
double profile_thermal(double sigma_thermal, double gamma, double z0, double a0, double z);
double profile_thermal(const ThermalParams& p, double z);

/// Sum of the two closed-form single-ion profiles.
double two_ion_profile(const TwoIonParams& p, double z);

double density(const ProfileModel& model, double z);
/// Integral of density over the whole axis.
double profile_integral(const ProfileModel& model);
/// Number of emitting ions represented by the model.
int emitters(const ProfileModel& model);

/// Sensor counts, row-major with `width` axial columns and `height` radial rows.
struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint32_t> pixels;
    std::uint32_t at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
};

struct RenderResult {
    Image image;
    AxialProfile projection;      // observed counts summed over radial rows
    std::vector<double> expected; // expected counts per axial pixel
};

/// Axial pixel centers of the sensor (m).
std::vector<double> axial_pixel_centers(const OpticsConfig& optics);

/// Expected counts per axial pixel: exposure * rate * emitters * (pixel integral of the
/// normalized profile), with 8-point Gauss-Legendre per pixel.
std::vector<double> expected_axial_counts(const ProfileModel& model, const OpticsConfig& optics);

/// Time-averaged expected counts of a trajectory: each recorded position after the
/// settle point contributes a Lorentzian PSF (at most max_samples samples are used,
/// evenly spaced).
std::vector<double> expected_axial_counts(const Trajectory& traj, const OpticsConfig& optics,
                                          double settle_fraction = 0.0,
                                          std::size_t max_samples = 20000);

/// Noiseless axial profile with sqrt(expected) uncertainties.
AxialProfile expected_profile(const std::vector<double>& expected, const OpticsConfig& optics);

/// Poisson-sampled image: the expected axial counts spread radially by a Gaussian
/// of FWHM Gamma around the axis. Pixels are drawn row-major from one stream.
RenderResult render_image(const std::vector<double>& expected_axial, const OpticsConfig& optics,
                          std::uint64_t seed);
RenderResult render_image(const ProfileModel& model, const OpticsConfig& optics, std::uint64_t seed);
RenderResult render_image(const Trajectory& traj, const OpticsConfig& optics, std::uint64_t seed,
                          double settle_fraction = 0.0);

/// Full width at half maximum of a sampled profile, with linear interpolation
/// at the outermost half-maximum crossings.
double profile_fwhm(const std::vector<double>& z, const std::vector<double>& y);

}  // namespace iontrap
