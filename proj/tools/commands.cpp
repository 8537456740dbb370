#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <iostream>
#include <numeric>

#include "iontrap/constants.hpp"
#include "iontrap/dynamics.hpp"
#include "iontrap/error.hpp"
#include "iontrap/fitting.hpp"
#include "iontrap/hash.hpp"
#include "iontrap/io.hpp"
#include "iontrap/random.hpp"

namespace iontrap::cli {

namespace c = iontrap::constants;
using nlohmann::ordered_json;

namespace {

double hz(double omega) { return omega / c::two_pi; }

std::string fixed(double x, int digits) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*f", digits, x);
    return buf;
}

/// Re-throws module errors with a location prefix, keeping the error kind.
template <typename Fn>
auto with_context(const std::string& where, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const Error& e) {
        throw Error(e.kind(), where + ": " + e.what());
    }
}

std::vector<double> linspace(double a, double b, std::size_t n) {
    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k) out[k] = n == 1 ? a : a + (b - a) * static_cast<double>(k) / static_cast<double>(n - 1);
    return out;
}

ordered_json with_config(ordered_json j, const ExperimentConfig& cfg) {
    j["config"] = config_json(cfg);
    return j;
}

}  // namespace

std::vector<double> linear_response(const CrystalConfig& crystal, double stiffness, double f_e, double omega) {
    const auto modes = normal_modes(crystal, stiffness);
    const std::size_t n = crystal.size();
    const double q0 = crystal.species[0].charge;
    std::vector<std::complex<double>> z(n);
    for (std::size_t k = 0; k < modes.frequencies.size(); ++k) {
        const auto& v = modes.vectors[k];
        double drive = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            drive += v[j] * f_e * crystal.species[j].charge / q0 / std::sqrt(crystal.species[j].mass);
        const double wk = modes.frequencies[k];
        const std::complex<double> chi = 1.0 / std::complex<double>(wk * wk - omega * omega, 2.0 * crystal.gamma_z * omega);
        for (std::size_t i = 0; i < n; ++i) z[i] += v[i] / std::sqrt(crystal.species[i].mass) * drive * chi;
    }
    std::vector<double> amp(n);
    for (std::size_t i = 0; i < n; ++i) amp[i] = std::abs(z[i]);
    return amp;
}

void cmd_modes(const ExperimentConfig& cfg, Run& run) {
    const auto& ion = cfg.crystal.species.front();
    const double wz = secular_frequency(cfg.trap);
    const double sep = equilibrium_separation(ion, wz);
    const auto modes = normal_modes(cfg.crystal, axial_stiffness(cfg.trap, ion, ion.charge));
    const double single = heating_rate_single(ion, wz, cfg.heating.s_e);
    const int n_ions = static_cast<int>(cfg.crystal.size());
    const double com = heating_rate_com(n_ions, single);
    const double t_limit = doppler_limit_temperature(cfg.heating, cfg.crystal.gamma_z, cfg.noise.v_noise);

    std::cout << "secular frequency     " << fixed(hz(wz) * 1e-3, 4) << " kHz (q_z = " << fixed(cfg.trap.q_z, 4)
              << ", a_z = " << fixed(cfg.trap.a_z, 6) << ")\n"
              << "two-ion separation    " << fixed(sep * 1e6, 4) << " um (" << ion.label << ")\n";
    for (std::size_t k = 0; k < modes.frequencies.size(); ++k)
        std::cout << "crystal mode " << k << "        " << fixed(hz(modes.frequencies[k]) * 1e-3, 4) << " kHz\n";
    std::cout << "heating rate          " << fixed(single, 3) << " quanta/s single, " << fixed(com, 3) << " quanta/s COM (N = "
              << n_ions << ")\n\n"
              << "      mu    f_minus/kHz     f_plus/kHz  minus/ref   plus/ref\n";

    ordered_json rows = ordered_json::array();
    std::vector<double> mu_col, fm, fp, rm, rp;
    for (double mu : cfg.modes_mu) {
        const auto p = two_ion_eigenfrequencies(mu, wz);
        char line[128];
        std::snprintf(line, sizeof line, "%8.4f %14.4f %14.4f %10.6f %10.6f\n", mu, hz(p.minus) * 1e-3,
                      hz(p.plus) * 1e-3, p.minus / wz, p.plus / wz);
        std::cout << line;
        rows.push_back({{"mu", mu}, {"f_minus_hz", hz(p.minus)}, {"f_plus_hz", hz(p.plus)},
                        {"ratio_minus", p.minus / wz}, {"ratio_plus", p.plus / wz}});
        mu_col.push_back(mu);
        fm.push_back(hz(p.minus));
        fp.push_back(hz(p.plus));
        rm.push_back(p.minus / wz);
        rp.push_back(p.plus / wz);
    }

    ordered_json j;
    j["secular_freq_hz"] = hz(wz);
    j["q_z"] = cfg.trap.q_z;
    j["a_z"] = cfg.trap.a_z;
    j["separation_m"] = sep;
    ordered_json mf = ordered_json::array();
    for (double w : modes.frequencies) mf.push_back(hz(w));
    j["crystal_mode_freq_hz"] = mf;
    j["heating_rate_single_per_s"] = single;
    j["heating_rate_com_per_s"] = com;
    j["doppler_limit_k"] = t_limit;
    j["eigenfrequencies"] = rows;
    run.write_json("modes.json", with_config(j, cfg));
    run.write("modes.csv", io::csv_text({"mu", "f_minus_hz", "f_plus_hz", "ratio_minus", "ratio_plus"},
                                         {mu_col, fm, fp, rm, rp}));
}

void cmd_scan(const ExperimentConfig& cfg, Run& run) {
    const auto omegas = linspace(cfg.scan.omega_start, cfg.scan.omega_stop, cfg.scan.points);
    ResonanceScan scan;
    scan.frequencies = omegas;
    scan.rho_max.resize(omegas.size());
    scan.uncertainties.resize(omegas.size());
    for (std::size_t k = 0; k < omegas.size(); ++k) {
        DriveSpec drive = cfg.drive;
        drive.omega_dip = omegas[k];
        SimConfig sim = cfg.sim;
        sim.seed = derive_seed(cfg.seed, k);
        const auto r = with_context("scan point " + std::to_string(k) + " (" + fixed(hz(omegas[k]), 3) + " Hz)", [&] {
            return simulate_drive_response(cfg.crystal, cfg.trap, drive, cfg.noise, sim);
        });
        scan.rho_max[k] = r.rho;
        scan.uncertainties[k] = r.rho_err;
    }
    std::vector<double> f_hz(omegas.size());
    std::transform(omegas.begin(), omegas.end(), f_hz.begin(), hz);
    run.write("scan.csv", io::csv_text({"f_hz", "rho_m", "rho_err_m"}, {f_hz, scan.rho_max, scan.uncertainties}));

    const auto fit = with_context("resonance fit", [&] { return fit_resonance(scan, cfg.crystal.species.front().mass); });
    auto j = io::fit_to_json(fit);
    j["derived"] = {{"f_z_hz", hz(fit.param("omega_z"))}, {"f_z_err_hz", hz(fit.uncertainty("omega_z"))}};
    run.write_json("fit.json", with_config(j, cfg));
    std::cout << "resonance " << fixed(hz(fit.param("omega_z")), 2) << " +- " << fixed(hz(fit.uncertainty("omega_z")), 2)
              << " Hz, gamma_z " << fixed(fit.param("gamma_z"), 2) << " +- " << fixed(fit.uncertainty("gamma_z"), 2)
              << " 1/s, chi2/dof " << fixed(fit.chi2_per_dof, 3) << "\n";
}

void cmd_noise_sweep(const ExperimentConfig& cfg, Run& run) {
    const auto& levels = cfg.sweep.v2;
    if (levels.empty()) throw UsageError("noise-sweep: the v2 list is empty");
    const std::size_t n = levels.size();
    std::vector<double> sigma2(n), err(n), dist, widths;
    const DriveSpec no_drive{};
    for (std::size_t k = 0; k < n; ++k) {
        NoiseSpec noise = cfg.noise;
        noise.v_noise = std::sqrt(levels[k]);
        SimConfig sim = cfg.sim;
        sim.seed = derive_seed(cfg.seed, k);
        const std::string where = "noise level " + std::to_string(k) + " (v2 = " + io::format_double(levels[k]) + ")";
        const auto stats = with_context(where, [&] {
            return simulate_ensemble_stats(cfg.crystal, cfg.trap, no_drive, noise, sim);
        });
        if (cfg.sweep.observable == SweepObservable::ion) {
            sigma2[k] = stats.sigma2[0];
            err[k] = stats.sigma2_err[0];
        } else {
            sigma2[k] = stats.mode_sigma2[0];
            err[k] = stats.mode_sigma2_err[0];
        }
        if (cfg.sweep.morphology) {
            // Member 0 of the ensemble above, imaged.
            SimConfig one = sim;
            one.seed = derive_seed(sim.seed, 0);
            const auto traj = with_context(where, [&] { return simulate(cfg.crystal, cfg.trap, no_drive, noise, one); });
            const auto img = render_image(traj, cfg.optics, derive_seed(sim.seed, 1u << 20), cfg.sim.settle_fraction);
            dist.push_back(lobe_distinguishability(img.projection));
            widths.push_back(profile_fwhm(img.projection.bin_centers, img.expected));
        }
    }
    run.write("sweep.csv", io::csv_text({"v2", "sigma2", "sigma2_err"}, {levels, sigma2, err}));
    if (cfg.sweep.morphology)
        run.write("morphology.csv", io::csv_text({"v2", "distinguishability", "profile_fwhm_m"}, {levels, dist, widths}));

    NoiseSweep sweep{levels, sigma2, err};
    if (std::any_of(err.begin(), err.end(), [](double e) { return !(e > 0.0); })) sweep.uncertainties.clear();

    ordered_json plateau;
    if (n >= 12) {
        const auto p = with_context("plateau detection", [&] { return detect_plateau(sweep); });
        plateau["segments"] = p.segments;
        plateau["plateau_found"] = p.plateau_found;
        plateau["degenerate"] = p.degenerate;
        plateau["breakpoint_low_v2"] = p.breakpoint_low;
        plateau["breakpoint_low_err_v2"] = p.breakpoint_low_err;
        plateau["breakpoint_high_v2"] = p.breakpoint_high;
        plateau["breakpoint_high_err_v2"] = p.breakpoint_high_err;
        plateau["intercept_m2"] = p.intercept;
        plateau["slopes_m2_per_v2"] = p.slopes;
        plateau["bic_line"] = p.bic_line;
        plateau["bic_segmented"] = p.bic_segmented;
    } else {
        plateau["skipped"] = "plateau detection needs at least 12 noise levels";
    }
    run.write_json("plateau.json", with_config(plateau, cfg));

    const auto line = with_context("noise line fit", [&] {
        return fit_noise_line(sweep, cfg.sweep.window_min, cfg.sweep.window_max);
    });
    auto j = io::fit_to_json(line);
    j["observable"] = cfg.sweep.observable == SweepObservable::ion ? "ion" : "com";
    j["window_v2"] = {cfg.sweep.window_min, std::isfinite(cfg.sweep.window_max) ? ordered_json(cfg.sweep.window_max)
                                                                                 : ordered_json("inf")};
    run.write_json("line.json", with_config(j, cfg));
    std::cout << "slope " << io::format_double(line.param("c1")) << " +- " << io::format_double(line.uncertainty("c1"))
              << " m^2/V^2, R^2 " << fixed(line.r_squared, 5) << "\n";
}

void cmd_predict_spectrum(const ExperimentConfig& cfg, Run& run) {
    const auto& ion = cfg.crystal.species.front();
    const double w_ref = cfg.spectrum.omega_ref;
    const double stiffness = ion.mass * w_ref * w_ref;
    const double mu = cfg.spectrum.mu;
    const auto predicted = two_ion_eigenfrequencies(mu, w_ref);

    CrystalConfig ref{{ion, ion}, cfg.crystal.gamma_z};
    CrystalConfig mixed{{ion, IonSpecies{mu * ion.mass, ion.charge, "partner"}}, cfg.crystal.gamma_z};

    // Only ions of the coolant species fluoresce.
    auto spectrum = [&](const CrystalConfig& crystal, double center, const std::string& name) {
        const auto z_eq = equilibrium_positions(crystal, stiffness);
        const auto omegas = linspace(center - cfg.spectrum.span, center + cfg.spectrum.span, cfg.spectrum.points);
        std::vector<double> f_hz, rho, width;
        for (double w : omegas) {
            const auto amp = linear_response(crystal, stiffness, cfg.drive.f_e, w);
            ProfileModel model = ProfileParams{cfg.optics.lorentzian_fwhm, z_eq[0], amp[0], 1.0};
            if (crystal.species[1].label == ion.label)
                model = TwoIonParams{cfg.optics.lorentzian_fwhm, z_eq[0], z_eq[1], amp[0], 1.0};
            const auto counts = expected_axial_counts(model, cfg.optics);
            f_hz.push_back(hz(w));
            rho.push_back(amp[0]);
            width.push_back(profile_fwhm(axial_pixel_centers(cfg.optics), counts));
        }
        run.write(name, io::csv_text({"f_hz", "rho_m", "profile_fwhm_m"}, {f_hz, rho, width}));
        return f_hz[static_cast<std::size_t>(std::max_element(rho.begin(), rho.end()) - rho.begin())];
    };
    const double peak_ref = spectrum(ref, w_ref, "spectrum_ref.csv");
    const double peak_mu = spectrum(mixed, predicted.minus, "spectrum_mu.csv");

    ordered_json j;
    j["mu"] = mu;
    j["f_ref_hz"] = hz(w_ref);
    j["f_minus_predicted_hz"] = hz(predicted.minus);
    j["f_plus_predicted_hz"] = hz(predicted.plus);
    j["peak_ref_hz"] = peak_ref;
    j["peak_mu_hz"] = peak_mu;
    j["drive_force_n"] = cfg.drive.f_e;
    run.write_json("spectrum.json", with_config(j, cfg));
    std::cout << "reference peak " << fixed(peak_ref, 2) << " Hz, mu = " << mu << " peak " << fixed(peak_mu, 2)
              << " Hz (predicted " << fixed(hz(predicted.minus), 2) << " Hz)\n";
}

void cmd_render(const ExperimentConfig& cfg, Run& run) {
    const double g = cfg.optics.lorentzian_fwhm;
    const double photons = cfg.optics.photon_rate * cfg.optics.exposure;
    ordered_json j;
    RenderResult img;
    switch (cfg.render.source) {
    case RenderSource::simulate: {
        SimConfig sim = cfg.sim;
        sim.seed = derive_seed(cfg.seed, 0);
        const auto traj = simulate(cfg.crystal, cfg.trap, cfg.drive, cfg.noise, sim);
        if (cfg.render.write_trajectory) run.write("trajectory.csv", io::trajectory_csv(traj));
        img = render_image(traj, cfg.optics, derive_seed(cfg.seed, 1), cfg.sim.settle_fraction);
        j["source"] = "simulate";
        break;
    }
    case RenderSource::single: {
        const ProfileParams p{g, cfg.render.z0, cfg.render.rho_max, photons * g * g};
        img = render_image(ProfileModel{p}, cfg.optics, derive_seed(cfg.seed, 1));
        j["source"] = "single";
        j["params"] = {{"gamma", p.gamma}, {"z0", p.z0}, {"rho_max", p.rho_max}, {"a0", p.a0}};
        break;
    }
    case RenderSource::two_ion: {
        CrystalConfig pair = cfg.crystal;
        if (pair.size() == 1) pair.species.push_back(pair.species.front());
        const auto z = equilibrium_positions(pair, axial_stiffness(cfg.trap, pair.species[0], pair.species[0].charge));
        const TwoIonParams p{g, cfg.render.z0 + z[0], cfg.render.z0 + z[1], cfg.render.rho_max, photons * g * g};
        img = render_image(ProfileModel{p}, cfg.optics, derive_seed(cfg.seed, 1));
        j["source"] = "two-ion";
        j["params"] = {{"gamma", p.gamma}, {"z1", p.z1}, {"z2", p.z2}, {"rho_max", p.rho_max}, {"a0", p.a0}};
        break;
    }
    case RenderSource::thermal: {
        const ThermalParams p{cfg.render.sigma, g, cfg.render.z0, photons};
        img = render_image(ProfileModel{p}, cfg.optics, derive_seed(cfg.seed, 1));
        j["source"] = "thermal";
        j["params"] = {{"sigma", p.sigma}, {"gamma", p.gamma}, {"z0", p.z0}, {"a0", p.a0}};
        break;
    }
    }
    const auto& proj = img.projection;
    const double pixel = cfg.optics.pixel_size_effective;
    std::vector<double> dens(img.expected.size());
    std::transform(img.expected.begin(), img.expected.end(), dens.begin(), [pixel](double e) { return e / pixel; });

    run.write("image.pgm", io::pgm_bytes(img.image));
    run.write("image.csv", io::image_csv(img.image));
    run.write("projection.csv", io::csv_text({"z_m", "counts", "counts_err"}, {proj.bin_centers, proj.counts, proj.uncertainties}));
    run.write("density.csv", io::csv_text({"z_m", "density"}, {proj.bin_centers, dens}));

    j["total_counts"] = proj.total();
    j["expected_total"] = std::accumulate(img.expected.begin(), img.expected.end(), 0.0);
    j["expected_fwhm_m"] = profile_fwhm(proj.bin_centers, img.expected);
    j["lobe_distinguishability"] = lobe_distinguishability(proj);
    run.write_json("render.json", with_config(j, cfg));
    std::cout << "rendered " << img.image.width << "x" << img.image.height << " image, " << fixed(proj.total(), 0)
              << " counts, distinguishability " << fixed(j["lobe_distinguishability"].get<double>(), 3) << "\n";
}

void cmd_fit(const ExperimentConfig& cfg, const FitInput& input, Run& run) {
    const auto table = io::parse_csv(input.text, input.profile.string());
    const auto profile = io::profile_from_csv(table);
    FitResult fit;
    ProfileModel model;
    if (input.model == "single") {
        fit = fit_profile_single(profile);
        model = single_params(fit);
    } else if (input.model == "two-ion") {
        fit = fit_profile_two_ion(profile);
        model = two_ion_params(fit);
    } else if (input.model == "thermal") {
        fit = fit_profile_thermal(profile);
        model = thermal_params(fit);
    } else {
        throw UsageError("fit: unknown model '" + input.model + "' (single, two-ion, thermal)");
    }
    const auto expected = binned_model(model, profile.bin_centers, profile.bin_width());
    run.write("residuals.csv", io::csv_text({"z_m", "counts", "model_counts", "residual_counts"},
                                            {profile.bin_centers, profile.counts, expected, fit.residuals}));
    auto j = io::fit_to_json(fit);
    j["input"] = {{"path", input.profile.filename().string()},
                  {"rows", profile.size()},
                  {"fnv1a", hex64(Fnv1a().text(input.text).digest())}};
    run.write_json("fit.json", with_config(j, cfg));
    std::cout << input.model << " fit: chi2/dof " << fixed(fit.chi2_per_dof, 3) << "\n";
    for (std::size_t k = 0; k < fit.names.size(); ++k)
        std::cout << "  " << fit.names[k] << " = " << io::format_double(fit.params[k]) << " +- "
                  << io::format_double(fit.uncertainties[k]) << "\n";
}

}  // namespace iontrap::cli
