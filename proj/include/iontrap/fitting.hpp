#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "iontrap/imaging.hpp"
#include "iontrap/optimize.hpp"
#include "iontrap/profile.hpp"

namespace iontrap {

struct FitResult {
    std::string model;
    std::vector<std::string> names;
    std::vector<double> params;
    std::vector<double> uncertainties;
    /// Quantities computed from the fitted parameters, e.g. the two-ion separation.
    std::vector<std::string> derived_names;
    std::vector<double> derived;
    std::vector<double> derived_uncertainties;
    double chi2 = 0.0;
    double chi2_per_dof = 0.0;
    std::size_t dof = 0;
    bool converged = false;
    std::size_t n_iterations = 0;
    /// data - model, one entry per data point.
    std::vector<double> residuals;
    std::vector<double> objective_history;
    /// Coefficient of determination (linear fits only).
    double r_squared = 0.0;

    double param(const std::string& name) const;
    double uncertainty(const std::string& name) const;
    double derived_value(const std::string& name) const;
    double derived_uncertainty(const std::string& name) const;
};

struct ResonanceScan {
    std::vector<double> frequencies;  // rad/s
    std::vector<double> rho_max;      // m
    std::vector<double> uncertainties;
    void validate() const;
};

struct NoiseSweep {
    std::vector<double> v2;      // V^2
    std::vector<double> sigma2;  // m^2
    std::vector<double> uncertainties;
    void validate() const;
};

/// Expected counts per bin: the profile integrated over each bin (8-point Gauss-Legendre).
std::vector<double> binned_model(const ProfileModel& model, const std::vector<double>& centers,
                                 double bin_width);

/// Optional start point and fixed parameters for the profile fits.
template <typename P>
struct ProfileFitOptions {
    std::optional<P> initial;
    /// Names of parameters held at their initial value.
    std::vector<std::string> fixed;
    /// Poisson likelihood on the counts (deviance residuals). When false the
    /// profile's uncertainties are used as Gaussian errors.
    bool poisson = true;
};

/// Driven single-ion fit, parameters gamma, z0, rho_max, a0. chi2 is the
/// Poisson deviance unless Gaussian weighting is selected.
FitResult fit_profile_single(const AxialProfile& profile,
                             const ProfileFitOptions<ProfileParams>& options = {});
/// Two ions with shared gamma and rho_max: gamma, z1, z2, rho_max, a0 (z1 <= z2).
/// Derived: z0 = (z2 - z1)/2 and separation = z2 - z1.
FitResult fit_profile_two_ion(const AxialProfile& profile,
                              const ProfileFitOptions<TwoIonParams>& options = {});
/// Voigt fit: sigma, gamma, z0, a0.
FitResult fit_profile_thermal(const AxialProfile& profile,
                              const ProfileFitOptions<ThermalParams>& options = {});

ProfileParams single_params(const FitResult& fit);
TwoIonParams two_ion_params(const FitResult& fit);
ThermalParams thermal_params(const FitResult& fit);

/// rho(omega) = (F_e/m) / sqrt((2 gamma omega)^2 + (omega_z^2 - omega^2)^2).
double resonance_amplitude(double f_e, double mass, double omega_z, double gamma_z, double omega);

/// Fit of F_e, omega_z, gamma_z. Throws NotBracketedError unless the scan maximum is
/// interior and exceeds both edge points by more than 3 combined standard errors,
/// and also when the fitted omega_z falls outside the scan or gamma_z is not
/// determined to better than 100%.
FitResult fit_resonance(const ResonanceScan& scan, double mass);

/// Joint fit of two scans sharing F_e: F_e, omega_z_1, gamma_z_1, omega_z_2, gamma_z_2.
FitResult fit_resonance_joint(const ResonanceScan& first, double mass_first,
                              const ResonanceScan& second, double mass_second);

/// Weighted straight line sigma2 = c0 + c1 v2 over v2 in [v2_min, v2_max].
/// Needs >= 4 points in the window (InsufficientDataError).
FitResult fit_noise_line(const NoiseSweep& sweep, double v2_min = 0.0,
                         double v2_max = std::numeric_limits<double>::infinity());

struct SlopeRatio {
    double value = 0.0;
    double uncertainty = 0.0;
};
/// c1 of `numerator` over c1 of `denominator`, first-order error propagation.
SlopeRatio slope_ratio(const FitResult& numerator, const FitResult& denominator);

struct PlateauResult {
    std::size_t segments = 1;  // 1 (no plateau) or 3
    bool plateau_found = false;
    bool degenerate = false;   // constant data: plateau everywhere
    double breakpoint_low = 0.0;
    double breakpoint_high = 0.0;
    double breakpoint_low_err = 0.0;
    double breakpoint_high_err = 0.0;
    double intercept = 0.0;
    std::vector<double> slopes;  // one per segment
    double bic_line = 0.0;
    double bic_segmented = 0.0;
};

/// Continuous three-segment piecewise-linear fit (rise, plateau, rise) against a
/// single line, chosen by BIC. Needs >= 12 points.
PlateauResult detect_plateau(const NoiseSweep& sweep);

enum class ModeBranch { minus, plus };

struct MassRatioEstimate {
    double mu = 0.0;
    double uncertainty = 0.0;
};

/// Solves the two-ion eigenfrequency relation for mu by bisection on the chosen
/// branch. Throws OutOfRangeError when the frequency is outside the branch range
/// (0, sqrt(3/2)) omega_ref for minus and (sqrt 2, inf) omega_ref for plus.
MassRatioEstimate invert_mass_ratio(double omega, double omega_ref, ModeBranch branch = ModeBranch::minus,
                                    double omega_uncertainty = 0.0);

}  // namespace iontrap
