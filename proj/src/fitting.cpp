#include "iontrap/fitting.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include <boost/math/quadrature/gauss.hpp>

#include "iontrap/error.hpp"
#include "iontrap/physics.hpp"

namespace iontrap {

namespace {

std::size_t index_of(const std::vector<std::string>& names, const std::string& name) {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw DomainError("unknown fit parameter '" + name + "'");
    return static_cast<std::size_t>(it - names.begin());
}

/// Data, weights and a model map shared by all curve fits.
struct CurveProblem {
    std::vector<std::string> names;
    std::vector<double> y;
    std::vector<double> sqrt_w;
    /// Poisson deviance residuals instead of weighted differences.
    bool poisson = false;
    std::function<std::vector<double>(const Eigen::VectorXd&)> model;

    ResidualFunction residual() const {
        return [this](const Eigen::VectorXd& x) {
            const auto m = model(x);
            Eigen::VectorXd r(static_cast<Eigen::Index>(y.size()));
            for (std::size_t i = 0; i < y.size(); ++i) {
                double v = (y[i] - m[i]) * sqrt_w[i];
                if (poisson) {
                    if (!(m[i] > 0.0)) {
                        v = HUGE_VAL;
                    } else {
                        const double dev = 2.0 * (m[i] - y[i] + (y[i] > 0.0 ? y[i] * std::log(y[i] / m[i]) : 0.0));
                        v = std::copysign(std::sqrt(std::max(dev, 0.0)), y[i] - m[i]);
                    }
                }
                r[static_cast<Eigen::Index>(i)] = v;
            }
            return r;
        };
    }
    double objective(const Eigen::VectorXd& x) const {
        const auto r = residual()(x);
        return r.allFinite() ? r.squaredNorm() : HUGE_VAL;
    }
};

FitResult package(const std::string& model_name, const CurveProblem& prob, const LmResult& lm,
                  const std::vector<bool>& fixed, bool scale_by_chi2 = false) {
    FitResult fit;
    fit.model = model_name;
    fit.names = prob.names;
    fit.params.assign(lm.x.data(), lm.x.data() + lm.x.size());
    const std::size_t n_free =
        fixed.empty() ? prob.names.size()
                      : static_cast<std::size_t>(std::count(fixed.begin(), fixed.end(), false));
    fit.dof = prob.y.size() > n_free ? prob.y.size() - n_free : 0;
    fit.chi2 = lm.objective;
    fit.chi2_per_dof = fit.dof > 0 ? fit.chi2 / static_cast<double>(fit.dof) : 0.0;
    const double factor = scale_by_chi2 ? fit.chi2_per_dof : 1.0;
    for (Eigen::Index j = 0; j < lm.x.size(); ++j)
        fit.uncertainties.push_back(std::sqrt(std::max(0.0, lm.covariance(j, j) * factor)));
    fit.converged = lm.converged;
    fit.n_iterations = lm.iterations;
    const auto m = prob.model(lm.x);
    fit.residuals.resize(prob.y.size());
    for (std::size_t i = 0; i < prob.y.size(); ++i) fit.residuals[i] = prob.y[i] - m[i];
    fit.objective_history = lm.history;
    return fit;
}

std::vector<bool> fixed_mask(const std::vector<std::string>& names,
                             const std::vector<std::string>& fixed) {
    std::vector<bool> mask(names.size(), false);
    for (const auto& f : fixed) mask[index_of(names, f)] = true;
    return mask;
}

/// Runs LM from each start (best objectives first) and keeps the lowest objective.
LmResult best_of(const CurveProblem& prob, std::vector<Eigen::VectorXd> starts,
                 const Eigen::VectorXd& scale, const std::vector<bool>& fixed, std::size_t tries) {
    std::vector<std::pair<double, std::size_t>> ranked;
    for (std::size_t i = 0; i < starts.size(); ++i) ranked.emplace_back(prob.objective(starts[i]), i);
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    const auto f = prob.residual();
    std::optional<LmResult> best;
    std::optional<ConvergenceError> last_error;
    for (std::size_t k = 0; k < std::min(tries, ranked.size()); ++k) {
        if (!std::isfinite(ranked[k].first)) continue;
        try {
            LmResult r = levenberg_marquardt(f, starts[ranked[k].second], scale, fixed);
            if (!best || r.objective < best->objective) best = std::move(r);
        } catch (const ConvergenceError& e) {
            last_error = e;
        }
    }
    if (!best) {
        if (last_error) throw *last_error;
        throw ConvergenceError("fit: no usable start point");
    }
    return *best;
}

struct ProfileData {
    std::vector<double> z;
    std::vector<double> counts;
    double width = 0.0;
    double total = 0.0;
    double centroid = 0.0;
    double fwhm = 0.0;
    double q25 = 0.0;
    double q75 = 0.0;
    std::vector<double> errors;  // empty: Poisson likelihood
};

double quantile(const std::vector<double>& z, const std::vector<double>& c, double total, double p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (acc + c[i] >= p * total) {
            const double frac = c[i] > 0.0 ? (p * total - acc) / c[i] : 0.0;
            return z[i] + (frac - 0.5) * (z.size() > 1 ? z[1] - z[0] : 0.0);
        }
        acc += c[i];
    }
    return z.back();
}

ProfileData prepare_profile(const AxialProfile& profile, bool poisson) {
    profile.validate();
    if (!poisson) {
        if (profile.uncertainties.size() != profile.size() ||
            !std::all_of(profile.uncertainties.begin(), profile.uncertainties.end(), [](double e) { return e > 0.0; }))
            throw DomainError("profile fit: Gaussian weighting needs positive uncertainties for every bin");
    }
    const auto nonzero = std::count_if(profile.counts.begin(), profile.counts.end(),
                                       [](double c) { return c > 0.0; });
    if (nonzero < 10) throw InsufficientDataError("profile fit: need >= 10 bins with nonzero counts");
    ProfileData d;
    d.z = profile.bin_centers;
    d.counts = profile.counts;
    d.width = profile.bin_width();
    d.total = profile.total();
    std::vector<double> sorted = d.counts;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    const double median = sorted[sorted.size() / 2];
    const double peak = *std::max_element(d.counts.begin(), d.counts.end());
    if (peak - median <= 5.0 * std::sqrt(std::max(peak, 1.0)))
        throw DegenerateDataError("profile fit: profile is flat");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < d.z.size(); ++i)
        if (d.counts[i] >= 0.5 * peak) {
            num += d.counts[i] * d.z[i];
            den += d.counts[i];
        }
    d.centroid = num / den;
    d.fwhm = std::max(profile_fwhm(d.z, d.counts), d.width);
    d.q25 = quantile(d.z, d.counts, d.total, 0.25);
    d.q75 = quantile(d.z, d.counts, d.total, 0.75);
    if (!poisson) d.errors = profile.uncertainties;
    return d;
}

CurveProblem profile_problem(const ProfileData& d, std::vector<std::string> names,
                             std::function<ProfileModel(const Eigen::VectorXd&)> to_model) {
    CurveProblem prob;
    prob.names = std::move(names);
    prob.y = d.counts;
    prob.poisson = d.errors.empty();
    prob.sqrt_w.resize(d.counts.size());
    for (std::size_t i = 0; i < d.counts.size(); ++i)
        prob.sqrt_w[i] = prob.poisson ? 1.0 : 1.0 / d.errors[i];
    const auto z = d.z;
    const double w = d.width;
    prob.model = [z, w, to_model](const Eigen::VectorXd& x) {
        try {
            return binned_model(to_model(x), z, w);
        } catch (const DomainError&) {
            return std::vector<double>(z.size(), HUGE_VAL);
        }
    };
    return prob;
}

void check_initial_size(const std::vector<std::string>& fixed, bool has_initial) {
    if (!fixed.empty() && !has_initial)
        throw DomainError("profile fit: fixed parameters need an initial guess");
}

}  // namespace

double FitResult::param(const std::string& name) const { return params.at(index_of(names, name)); }
double FitResult::uncertainty(const std::string& name) const {
    return uncertainties.at(index_of(names, name));
}
double FitResult::derived_value(const std::string& name) const {
    return derived.at(index_of(derived_names, name));
}
double FitResult::derived_uncertainty(const std::string& name) const {
    return derived_uncertainties.at(index_of(derived_names, name));
}

void ResonanceScan::validate() const {
    if (frequencies.size() != rho_max.size() ||
        (!uncertainties.empty() && uncertainties.size() != rho_max.size()))
        throw DomainError("resonance scan: array lengths differ");
    for (std::size_t i = 1; i < frequencies.size(); ++i)
        if (!(frequencies[i] > frequencies[i - 1]))
            throw DomainError("resonance scan: frequencies must increase strictly");
}

void NoiseSweep::validate() const {
    if (v2.size() != sigma2.size() || (!uncertainties.empty() && uncertainties.size() != v2.size()))
        throw DomainError("noise sweep: array lengths differ");
    for (double x : v2)
        if (!(x >= 0.0)) throw DomainError("noise sweep: v2 must be >= 0");
}

std::vector<double> binned_model(const ProfileModel& model, const std::vector<double>& centers,
                                 double bin_width) {
    std::vector<double> out(centers.size());
    const double h = 0.5 * bin_width;
    for (std::size_t j = 0; j < centers.size(); ++j)
        out[j] = boost::math::quadrature::gauss<double, 8>::integrate(
            [&](double z) { return density(model, z); }, centers[j] - h, centers[j] + h);
    return out;
}

FitResult fit_profile_single(const AxialProfile& profile,
                             const ProfileFitOptions<ProfileParams>& options) {
    check_initial_size(options.fixed, options.initial.has_value());
    const auto d = prepare_profile(profile, options.poisson);
    auto prob = profile_problem(d, {"gamma", "z0", "rho_max", "a0"}, [](const Eigen::VectorXd& x) {
        return ProfileModel{ProfileParams{std::abs(x[0]), x[1], std::abs(x[2]), x[3]}};
    });
    std::vector<Eigen::VectorXd> starts;
    if (options.initial) {
        const auto& p = *options.initial;
        starts.push_back(Eigen::Vector4d(p.gamma, p.z0, p.rho_max, p.a0));
    } else {
        for (const auto& [rf, gf] : std::array<std::pair<double, double>, 5>{
                 {{0.0, 1.0}, {0.2, 0.6}, {0.35, 0.4}, {0.45, 0.2}, {0.5, 0.1}}}) {
            const double g = std::max(gf * d.fwhm, 0.5 * d.width);
            starts.push_back(Eigen::Vector4d(g, d.centroid, rf * d.fwhm, g * g * d.total));
        }
    }
    const Eigen::Vector4d scale(d.fwhm, d.fwhm, d.fwhm, std::abs(starts.front()[3]));
    const auto mask = fixed_mask(prob.names, options.fixed);
    auto lm = best_of(prob, starts, scale, mask, 2);
    lm.x[0] = std::abs(lm.x[0]);
    lm.x[2] = std::abs(lm.x[2]);
    return package("single", prob, lm, mask);
}

FitResult fit_profile_two_ion(const AxialProfile& profile,
                              const ProfileFitOptions<TwoIonParams>& options) {
    check_initial_size(options.fixed, options.initial.has_value());
    const auto d = prepare_profile(profile, options.poisson);
    auto prob = profile_problem(d, {"gamma", "z1", "z2", "rho_max", "a0"}, [](const Eigen::VectorXd& x) {
        return ProfileModel{TwoIonParams{std::abs(x[0]), x[1], x[2], std::abs(x[3]), x[4]}};
    });
    std::vector<Eigen::VectorXd> starts;
    auto start = [](double g, double z1, double z2, double rho, double a0) {
        Eigen::VectorXd v(5);
        v << g, z1, z2, rho, a0;
        return v;
    };
    if (options.initial) {
        const auto& p = *options.initial;
        starts.push_back(start(p.gamma, p.z1, p.z2, p.rho_max, p.a0));
    } else {
        const double spread = std::max(d.q75 - d.q25, d.width);
        const double mid = 0.5 * (d.q25 + d.q75);
        for (double sf : {1.0, 0.5})
            for (double gf : {0.25, 0.5, 1.0})
                for (double rf : {0.0, 0.25, 0.5, 1.0}) {
                    const double g = std::max(gf * spread, 0.5 * d.width);
                    starts.push_back(start(g, mid - 0.5 * sf * spread, mid + 0.5 * sf * spread,
                                           rf * spread, 0.5 * g * g * d.total));
                }
    }
    const double len = std::max(d.q75 - d.q25, d.fwhm);
    Eigen::VectorXd scale(5);
    scale << len, len, len, len, std::abs(starts.front()[4]);
    const auto mask = fixed_mask(prob.names, options.fixed);
    auto lm = best_of(prob, starts, scale, mask, 3);
    lm.x[0] = std::abs(lm.x[0]);
    lm.x[3] = std::abs(lm.x[3]);
    if (lm.x[1] > lm.x[2]) {
        std::swap(lm.x[1], lm.x[2]);
        lm.covariance.row(1).swap(lm.covariance.row(2));
        lm.covariance.col(1).swap(lm.covariance.col(2));
    }
    auto fit = package("two-ion", prob, lm, mask);
    const double sep = lm.x[2] - lm.x[1];
    const double var = lm.covariance(1, 1) + lm.covariance(2, 2) - 2.0 * lm.covariance(1, 2);
    const double sep_err = std::sqrt(std::max(var, 0.0));
    fit.derived_names = {"z0", "separation"};
    fit.derived = {0.5 * sep, sep};
    fit.derived_uncertainties = {0.5 * sep_err, sep_err};
    return fit;
}

FitResult fit_profile_thermal(const AxialProfile& profile,
                              const ProfileFitOptions<ThermalParams>& options) {
    check_initial_size(options.fixed, options.initial.has_value());
    const auto d = prepare_profile(profile, options.poisson);
    auto prob = profile_problem(d, {"sigma", "gamma", "z0", "a0"}, [](const Eigen::VectorXd& x) {
        return ProfileModel{ThermalParams{std::abs(x[0]), std::abs(x[1]), x[2], x[3]}};
    });
    std::vector<Eigen::VectorXd> starts;
    if (options.initial) {
        const auto& p = *options.initial;
        starts.push_back(Eigen::Vector4d(p.sigma, p.gamma, p.z0, p.a0));
    } else {
        // Olivero-Longbothum width approximation solved for sigma.
        for (double gf : {0.1, 0.4, 0.7, 0.9}) {
            const double g = gf * d.fwhm;
            const double rest = d.fwhm - 0.5346 * g;
            const double gauss_fwhm = std::sqrt(std::max(rest * rest - 0.2166 * g * g, 0.0));
            const double s = std::max(gauss_fwhm / 2.3548200450309493, 0.25 * d.width);
            starts.push_back(Eigen::Vector4d(s, g, d.centroid, d.total));
        }
    }
    const Eigen::Vector4d scale(d.fwhm, d.fwhm, d.fwhm, std::abs(starts.front()[3]));
    const auto mask = fixed_mask(prob.names, options.fixed);
    auto lm = best_of(prob, starts, scale, mask, 2);
    lm.x[0] = std::abs(lm.x[0]);
    lm.x[1] = std::abs(lm.x[1]);
    return package("thermal", prob, lm, mask);
}

ProfileParams single_params(const FitResult& fit) {
    return {fit.param("gamma"), fit.param("z0"), fit.param("rho_max"), fit.param("a0")};
}

TwoIonParams two_ion_params(const FitResult& fit) {
    return {fit.param("gamma"), fit.param("z1"), fit.param("z2"), fit.param("rho_max"), fit.param("a0")};
}

ThermalParams thermal_params(const FitResult& fit) {
    return {fit.param("sigma"), fit.param("gamma"), fit.param("z0"), fit.param("a0")};
}

double resonance_amplitude(double f_e, double mass, double omega_z, double gamma_z, double omega) {
    const double a = 2.0 * gamma_z * omega;
    const double b = omega_z * omega_z - omega * omega;
    return f_e / mass / std::sqrt(a * a + b * b);
}

namespace {

struct ScanGuess {
    double f_e, omega_z, gamma;
};

bool has_errors(const std::vector<double>& err) {
    return !err.empty() && std::all_of(err.begin(), err.end(), [](double e) { return e > 0.0; });
}

ScanGuess check_and_guess(const ResonanceScan& scan, double mass) {
    scan.validate();
    if (!(mass > 0.0)) throw DomainError("fit_resonance: mass must be positive");
    const std::size_t n = scan.frequencies.size();
    if (n < 5) throw InsufficientDataError("fit_resonance: need >= 5 scan points");
    const auto& w = scan.frequencies;
    const auto& r = scan.rho_max;
    const std::size_t k = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
    auto err = [&](std::size_t i) { return scan.uncertainties.empty() ? 0.0 : scan.uncertainties[i]; };
    if (k == 0 || k + 1 == n)
        throw NotBracketedError("fit_resonance: scan maximum lies on the range edge");
    for (std::size_t e : {std::size_t{0}, n - 1})
        if (!(r[k] - r[e] > 3.0 * std::hypot(err(k), err(e))))
            throw NotBracketedError("fit_resonance: peak is not significantly above the scan edges");

    // Vertex of the parabola through the three points around the maximum.
    double wz = w[k];
    {
        const double x0 = w[k - 1], x1 = w[k], x2 = w[k + 1];
        const double y0 = r[k - 1], y1 = r[k], y2 = r[k + 1];
        const double denom = (x0 - x1) * (x0 - x2) * (x1 - x2);
        const double a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom;
        const double b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom;
        if (a < 0.0) wz = std::clamp(-b / (2.0 * a), x0, x2);
    }
    const double peak = r[k];
    double gamma = 0.0;
    if (r.front() < 0.5 * peak && r.back() < 0.5 * peak) {
        gamma = profile_fwhm(w, r) / (2.0 * std::sqrt(3.0));
    } else {
        double sum = 0.0;
        for (std::size_t e : {std::size_t{0}, n - 1})
            sum += r[e] * std::abs(wz * wz - w[e] * w[e]) / (2.0 * wz * peak);
        gamma = 0.5 * sum;
    }
    gamma = std::max(gamma, 1e-6 * wz);
    return {peak * mass * 2.0 * gamma * wz, wz, gamma};
}

// A fit whose resonance lies outside the scan or whose width is unconstrained
// did not see a resonance.
void check_resolved(const ResonanceScan& scan, double omega_z, double gamma, double gamma_err) {
    if (!(omega_z > scan.frequencies.front() && omega_z < scan.frequencies.back()))
        throw NotBracketedError("fit_resonance: fitted resonance lies outside the scan range");
    if (!(gamma_err < gamma))
        throw NotBracketedError("fit_resonance: resonance width is not resolved by the scan");
}

void append_scan(CurveProblem& prob, const ResonanceScan& scan) {
    const bool weighted = has_errors(scan.uncertainties);
    for (std::size_t i = 0; i < scan.rho_max.size(); ++i) {
        prob.y.push_back(scan.rho_max[i]);
        prob.sqrt_w.push_back(weighted ? 1.0 / scan.uncertainties[i] : 1.0);
    }
}

}  // namespace

FitResult fit_resonance(const ResonanceScan& scan, double mass) {
    const auto g = check_and_guess(scan, mass);
    CurveProblem prob;
    prob.names = {"f_e", "omega_z", "gamma_z"};
    append_scan(prob, scan);
    const auto w = scan.frequencies;
    prob.model = [w, mass](const Eigen::VectorXd& x) {
        std::vector<double> m(w.size());
        for (std::size_t i = 0; i < w.size(); ++i)
            m[i] = resonance_amplitude(x[0], mass, x[1], std::abs(x[2]), w[i]);
        return m;
    };
    const Eigen::Vector3d x0(g.f_e, g.omega_z, g.gamma);
    const Eigen::Vector3d scale(g.f_e, g.gamma, g.gamma);
    auto lm = levenberg_marquardt(prob.residual(), x0, scale);
    lm.x[2] = std::abs(lm.x[2]);
    auto fit = package("resonance", prob, lm, {}, !has_errors(scan.uncertainties));
    check_resolved(scan, fit.params[1], fit.params[2], fit.uncertainties[2]);
    return fit;
}

FitResult fit_resonance_joint(const ResonanceScan& first, double mass_first,
                              const ResonanceScan& second, double mass_second) {
    const auto a = fit_resonance(first, mass_first);
    const auto b = fit_resonance(second, mass_second);
    CurveProblem prob;
    prob.names = {"f_e", "omega_z_1", "gamma_z_1", "omega_z_2", "gamma_z_2"};
    append_scan(prob, first);
    append_scan(prob, second);
    const auto w1 = first.frequencies;
    const auto w2 = second.frequencies;
    prob.model = [=](const Eigen::VectorXd& x) {
        std::vector<double> m;
        m.reserve(w1.size() + w2.size());
        for (double w : w1) m.push_back(resonance_amplitude(x[0], mass_first, x[1], std::abs(x[2]), w));
        for (double w : w2) m.push_back(resonance_amplitude(x[0], mass_second, x[3], std::abs(x[4]), w));
        return m;
    };
    Eigen::VectorXd x0(5), scale(5);
    x0 << 0.5 * (a.params[0] + b.params[0]), a.params[1], a.params[2], b.params[1], b.params[2];
    scale << x0[0], a.params[2], a.params[2], b.params[2], b.params[2];
    auto lm = levenberg_marquardt(prob.residual(), x0, scale);
    lm.x[2] = std::abs(lm.x[2]);
    lm.x[4] = std::abs(lm.x[4]);
    const bool weighted = has_errors(first.uncertainties) && has_errors(second.uncertainties);
    auto fit = package("resonance-joint", prob, lm, {}, !weighted);
    check_resolved(first, fit.params[1], fit.params[2], fit.uncertainties[2]);
    check_resolved(second, fit.params[3], fit.params[4], fit.uncertainties[4]);
    return fit;
}

FitResult fit_noise_line(const NoiseSweep& sweep, double v2_min, double v2_max) {
    sweep.validate();
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < sweep.v2.size(); ++i)
        if (sweep.v2[i] >= v2_min && sweep.v2[i] <= v2_max) idx.push_back(i);
    if (idx.size() < 4) throw InsufficientDataError("fit_noise_line: need >= 4 points in the window");
    bool weighted = !sweep.uncertainties.empty();
    for (std::size_t i : idx)
        if (weighted && !(sweep.uncertainties[i] > 0.0)) weighted = false;

    const auto n = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd x(n, 2);
    Eigen::VectorXd y(n), w(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const std::size_t i = idx[static_cast<std::size_t>(k)];
        x(k, 0) = 1.0;
        x(k, 1) = sweep.v2[i];
        y[k] = sweep.sigma2[i];
        w[k] = weighted ? 1.0 / (sweep.uncertainties[i] * sweep.uncertainties[i]) : 1.0;
    }
    const Eigen::MatrixXd xtw = x.transpose() * w.asDiagonal();
    const Eigen::Matrix2d normal = xtw * x;
    if (std::abs(normal.determinant()) <= 1e-300 || (x.col(1).array() == x(0, 1)).all())
        throw DegenerateDataError("fit_noise_line: all v2 values are equal");
    const Eigen::Vector2d coef = normal.ldlt().solve(xtw * y);
    const Eigen::VectorXd resid = y - x * coef;
    const double chi2 = (resid.array().square() * w.array()).sum();
    const double ybar = (w.array() * y.array()).sum() / w.sum();
    const double ss_tot = (w.array() * (y.array() - ybar).square()).sum();

    FitResult fit;
    fit.model = "line";
    fit.names = {"c0", "c1"};
    fit.params = {coef[0], coef[1]};
    fit.dof = idx.size() - 2;
    fit.chi2 = chi2;
    fit.chi2_per_dof = fit.dof > 0 ? chi2 / static_cast<double>(fit.dof) : 0.0;
    Eigen::Matrix2d cov = normal.inverse();
    if (!weighted) cov *= fit.chi2_per_dof;
    fit.uncertainties = {std::sqrt(std::max(cov(0, 0), 0.0)), std::sqrt(std::max(cov(1, 1), 0.0))};
    fit.converged = true;
    fit.n_iterations = 1;
    fit.residuals.assign(resid.data(), resid.data() + resid.size());
    fit.objective_history = {chi2};
    fit.r_squared = ss_tot > 0.0 ? 1.0 - chi2 / ss_tot : 1.0;
    return fit;
}

SlopeRatio slope_ratio(const FitResult& numerator, const FitResult& denominator) {
    const double a = numerator.param("c1"), b = denominator.param("c1");
    if (b == 0.0) throw DivisionByZeroError("slope_ratio: denominator slope is zero");
    const double ra = numerator.uncertainty("c1") / a;
    const double rb = denominator.uncertainty("c1") / b;
    const double value = a / b;
    return {value, std::abs(value) * std::sqrt(ra * ra + rb * rb)};
}

namespace {

double hinge(double x, double b) { return x > b ? x - b : 0.0; }

/// Weighted SSE and coefficients of the continuous 3-segment model with fixed breakpoints.
std::pair<double, Eigen::Vector4d> segmented_ls(const std::vector<double>& x, const std::vector<double>& y,
                                                const std::vector<double>& w, double b1, double b2) {
    const auto n = static_cast<Eigen::Index>(x.size());
    Eigen::MatrixXd a(n, 4);
    Eigen::VectorXd rhs(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double s = std::sqrt(w[static_cast<std::size_t>(i)]);
        const double xi = x[static_cast<std::size_t>(i)];
        a(i, 0) = s;
        a(i, 1) = s * xi;
        a(i, 2) = s * hinge(xi, b1);
        a(i, 3) = s * hinge(xi, b2);
        rhs[i] = s * y[static_cast<std::size_t>(i)];
    }
    const Eigen::Vector4d c = a.colPivHouseholderQr().solve(rhs);
    return {(a * c - rhs).squaredNorm(), c};
}

}  // namespace

PlateauResult detect_plateau(const NoiseSweep& sweep) {
    sweep.validate();
    const std::size_t n = sweep.v2.size();
    if (n < 12) throw InsufficientDataError("detect_plateau: need >= 12 points");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return sweep.v2[a] < sweep.v2[b]; });
    const bool weighted = has_errors(sweep.uncertainties);
    std::vector<double> x(n), y(n), w(n);
    for (std::size_t k = 0; k < n; ++k) {
        x[k] = sweep.v2[order[k]];
        y[k] = sweep.sigma2[order[k]];
        w[k] = weighted ? 1.0 / std::pow(sweep.uncertainties[order[k]], 2) : 1.0;
    }
    if (x.front() == x.back()) throw DegenerateDataError("detect_plateau: all v2 values are equal");

    PlateauResult out;
    const auto [ymin, ymax] = std::minmax_element(y.begin(), y.end());
    const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
    double ybar = 0.0;
    for (std::size_t k = 0; k < n; ++k) ybar += w[k] * y[k] / wsum;
    double chi2_const = 0.0;
    for (std::size_t k = 0; k < n; ++k) chi2_const += w[k] * (y[k] - ybar) * (y[k] - ybar);
    if (*ymax == *ymin || (weighted && chi2_const / static_cast<double>(n - 1) <= 1.0)) {
        out.degenerate = true;
        out.plateau_found = true;
        out.segments = 1;
        out.breakpoint_low = x.front();
        out.breakpoint_high = x.back();
        out.intercept = ybar;
        out.slopes = {0.0};
        return out;
    }

    NoiseSweep sorted{x, y, {}};
    if (weighted)
        for (std::size_t k = 0; k < n; ++k) sorted.uncertainties.push_back(1.0 / std::sqrt(w[k]));
    const auto line = fit_noise_line(sorted);
    const double sse_line = std::accumulate(line.residuals.begin(), line.residuals.end(), 0.0,
                                            [&, k = std::size_t{0}](double acc, double r) mutable {
                                                return acc + w[k++] * r * r;
                                            });

    // Grid search over breakpoints at the data points and midpoints, >= 2 points per segment.
    std::vector<double> cand;
    for (std::size_t k = 1; k + 1 < n; ++k) {
        cand.push_back(x[k]);
        cand.push_back(0.5 * (x[k] + x[k + 1]));
    }
    auto count_le = [&](double b) {
        return static_cast<std::size_t>(std::upper_bound(x.begin(), x.end(), b) - x.begin());
    };
    double best_sse = HUGE_VAL, best_b1 = 0.0, best_b2 = 0.0;
    Eigen::Vector4d best_c = Eigen::Vector4d::Zero();
    for (std::size_t i = 0; i < cand.size(); ++i)
        for (std::size_t j = i + 1; j < cand.size(); ++j) {
            const double b1 = cand[i], b2 = cand[j];
            if (!(b2 > b1)) continue;
            const std::size_t n1 = count_le(b1), n12 = count_le(b2);
            if (n1 < 2 || n12 - n1 < 2 || n - n12 < 2) continue;
            const auto [sse, c] = segmented_ls(x, y, w, b1, b2);
            if (sse < best_sse) {
                best_sse = sse;
                best_b1 = b1;
                best_b2 = b2;
                best_c = c;
            }
        }
    if (!std::isfinite(best_sse)) throw InsufficientDataError("detect_plateau: too few points per segment");

    // Local refinement of all six parameters.
    CurveProblem prob;
    prob.names = {"c0", "s1", "d2", "d3", "b1", "b2"};
    prob.y = y;
    for (double wk : w) prob.sqrt_w.push_back(std::sqrt(wk));
    prob.model = [x](const Eigen::VectorXd& p) {
        std::vector<double> m(x.size());
        for (std::size_t k = 0; k < x.size(); ++k)
            m[k] = p[0] + p[1] * x[k] + p[2] * hinge(x[k], p[4]) + p[3] * hinge(x[k], p[5]);
        return m;
    };
    Eigen::VectorXd p0(6);
    p0 << best_c[0], best_c[1], best_c[2], best_c[3], best_b1, best_b2;
    const double span = x.back() - x.front();
    const double yspan = *ymax - *ymin;
    Eigen::VectorXd scale(6);
    scale << yspan, yspan / span, yspan / span, yspan / span, span, span;
    Eigen::VectorXd p = p0;
    double sse_seg = best_sse;
    double err_b1 = 0.5 * span / static_cast<double>(n), err_b2 = err_b1;
    try {
        const auto lm = levenberg_marquardt(prob.residual(), p0, scale);
        if (lm.objective <= best_sse && lm.x[4] < lm.x[5]) {
            p = lm.x;
            sse_seg = lm.objective;
            if (std::isfinite(lm.covariance(4, 4)) && std::isfinite(lm.covariance(5, 5))) {
                double factor = 1.0;
                if (!weighted) factor = n > 6 ? sse_seg / static_cast<double>(n - 6) : 0.0;
                err_b1 = std::sqrt(std::max(lm.covariance(4, 4) * factor, 0.0));
                err_b2 = std::sqrt(std::max(lm.covariance(5, 5) * factor, 0.0));
            }
        }
    } catch (const NumericalError&) {
    }

    double ss_tot = 0.0;
    for (std::size_t k = 0; k < n; ++k) ss_tot += w[k] * (y[k] - ybar) * (y[k] - ybar);
    const double floor = 1e-30 * ss_tot;
    const double dn = static_cast<double>(n);
    auto bic = [&](double sse, double k) {
        return weighted ? sse + k * std::log(dn) : dn * std::log(std::max(sse, floor) / dn) + k * std::log(dn);
    };
    out.bic_line = bic(sse_line, 2.0);
    out.bic_segmented = bic(sse_seg, 6.0);
    if (out.bic_segmented < out.bic_line) {
        out.segments = 3;
        out.plateau_found = true;
        out.intercept = p[0];
        out.slopes = {p[1], p[1] + p[2], p[1] + p[2] + p[3]};
        out.breakpoint_low = p[4];
        out.breakpoint_high = p[5];
        out.breakpoint_low_err = err_b1;
        out.breakpoint_high_err = err_b2;
    } else {
        out.segments = 1;
        out.intercept = line.params[0];
        out.slopes = {line.params[1]};
        out.breakpoint_low = x.front();
        out.breakpoint_high = x.back();
    }
    return out;
}

MassRatioEstimate invert_mass_ratio(double omega, double omega_ref, ModeBranch branch,
                                    double omega_uncertainty) {
    if (!(omega_ref > 0.0)) throw DomainError("invert_mass_ratio: omega_ref must be positive");
    if (!(omega_uncertainty >= 0.0)) throw DomainError("invert_mass_ratio: uncertainty must be >= 0");
    const double r = omega / omega_ref;
    const bool minus = branch == ModeBranch::minus;
    if (minus ? !(r > 0.0 && r < std::sqrt(1.5)) : !(r > std::sqrt(2.0)))
        throw OutOfRangeError("invert_mass_ratio: frequency ratio " + std::to_string(r) +
                              " is outside the attainable range of the branch");
    auto freq = [&](double mu) {
        const auto m = two_ion_eigenfrequencies(mu, omega_ref);
        return minus ? m.minus : m.plus;
    };
    // Both branches decrease monotonically in mu.
    double lo = std::log(1e-12), hi = std::log(1e12);
    if (!(freq(std::exp(lo)) >= omega && freq(std::exp(hi)) <= omega))
        throw OutOfRangeError("invert_mass_ratio: no mass ratio in [1e-12, 1e12] matches");
    for (int it = 0; it < 200 && hi - lo > 1e-16 * std::max(1.0, std::abs(hi)); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (freq(std::exp(mid)) > omega)
            lo = mid;
        else
            hi = mid;
    }
    MassRatioEstimate out;
    out.mu = std::exp(0.5 * (lo + hi));
    if (omega_uncertainty > 0.0) {
        const double h = 1e-6 * out.mu;
        const double slope = (freq(out.mu + h) - freq(out.mu - h)) / (2.0 * h);
        out.uncertainty = omega_uncertainty / std::abs(slope);
    }
    return out;
}

}  // namespace iontrap
