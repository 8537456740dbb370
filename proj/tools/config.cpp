#include "config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "iontrap/constants.hpp"
#include "iontrap/error.hpp"
#include "iontrap/hash.hpp"
#include "iontrap/io.hpp"

namespace iontrap::cli {

namespace c = iontrap::constants;

namespace {

std::string exact(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

struct KeySpec {
    std::string name;
    std::string fallback;
};

struct SectionSpec {
    std::string name;
    std::vector<KeySpec> keys;
};

// Empty defaults mean "not set".
const std::vector<SectionSpec>& schema() {
    static const GeometryFactor geometry;
    static const std::vector<SectionSpec> s = {
        {"run", {{"seed", "1"}, {"out", ""}}},
        {"trap",
         {{"rf_freq_mhz", "1.47"},
          {"v_rf_vpp", "730"},
          {"u_dc_v", "-11.5"},
          {"q_per_volt", exact(geometry.q_per_volt)},
          {"a_per_volt", exact(geometry.a_per_volt)},
          {"q_z", ""},
          {"a_z", ""},
          {"secular_freq_khz", ""}}},
        {"crystal", {{"species", "Ca40"}, {"gamma_z_per_s", "309"}}},
        {"drive",
         {{"amplitude_mvpp", "1"}, {"force_per_mvpp_n", "2e-22"}, {"freq_khz", ""}, {"phase_rad", "0"}}},
        {"noise",
         {{"v_noise_vpp", "0"},
          {"psd_per_v2", "1e-45"},
          {"background_psd", ""},
          {"background_temperature_mk", "1"},
          {"correlation", "correlated"},
          {"s_e", "1e-12"},
          {"zeta", "0"},
          {"k_const", "0"}}},
        {"optics",
         {{"psf_fwhm_um", "6"},
          {"magnification", "6.75"},
          {"pixel_um", "2.4"},
          {"photon_rate_per_s", "1e5"},
          {"exposure_s", "1"},
          {"pixels_axial", "128"},
          {"pixels_radial", "16"},
          {"center_um", "0"}}},
        {"sim",
         {{"dt_ns", "0"},
          {"duration_ms", "40"},
          {"mode", "secular"},
          {"ensemble", "16"},
          {"record_stride", "10"},
          {"settle_fraction", "0.5"}}},
        {"scan", {{"start_khz", "77"}, {"stop_khz", "83"}, {"points", "25"}}},
        {"sweep",
         {{"v2", "0, 0.0005, 0.001, 0.0015, 0.002, 0.003, 0.004, 0.005, 0.006, 0.008, 0.01, 0.012"},
          {"observable", "ion"},
          {"window_min_v2", "0"},
          {"window_max_v2", "inf"},
          {"morphology", "false"}}},
        {"spectrum", {{"mu", "4.675"}, {"span_khz", "1.5"}, {"points", "121"}, {"ref_khz", ""}}},
        {"modes", {{"mu", "1, 4.675"}}},
        {"render",
         {{"source", "simulate"}, {"rho_um", "5"}, {"sigma_um", "1"}, {"z0_um", "0"}, {"write_trajectory", "false"}}},
    };
    return s;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

/// (section.key) -> line number of its definition in the file.
std::map<std::string, int> key_lines(const std::string& text) {
    std::map<std::string, int> lines;
    std::istringstream in(text);
    std::string line, section;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        const auto t = trim(line);
        if (t.empty() || t[0] == ';' || t[0] == '#') continue;
        if (t.front() == '[' && t.back() == ']') {
            section = trim(t.substr(1, t.size() - 2));
            lines.emplace(section, n);
            continue;
        }
        const auto eq = t.find('=');
        if (eq != std::string::npos) lines.emplace(section + "." + trim(t.substr(0, eq)), n);
    }
    return lines;
}

class Values {
public:
    Values(std::string source, std::map<std::string, int> lines)
        : source_(std::move(source)), lines_(std::move(lines)) {
        for (const auto& sec : schema())
            for (const auto& k : sec.keys) values_[sec.name + "." + k.name] = k.fallback;
    }

    [[noreturn]] void fail(const std::string& id, const std::string& msg) const {
        std::string where = source_;
        if (auto it = lines_.find(id); it != lines_.end()) where += ":" + std::to_string(it->second);
        throw DomainError(where + ": " + msg);
    }

    void set(const std::string& id, const std::string& value) {
        if (!values_.count(id)) {
            const auto dot = id.find('.');
            const std::string sec = id.substr(0, dot);
            bool known_section = false;
            for (const auto& s : schema()) known_section = known_section || s.name == sec;
            if (!known_section) fail(sec, "unknown section [" + sec + "]");
            fail(id, "unknown key '" + id.substr(dot + 1) + "' in [" + sec + "]");
        }
        values_[id] = trim(value);
    }

    const std::string& text(const std::string& id) const { return values_.at(id); }
    bool has(const std::string& id) const { return !text(id).empty(); }

    double number(const std::string& id) const {
        const auto& s = text(id);
        if (s.empty()) fail(id, id + " is required");
        double v = 0.0;
        const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
        if (r.ec != std::errc() || r.ptr != s.data() + s.size()) fail(id, id + ": '" + s + "' is not a number");
        return v;
    }

    std::size_t count(const std::string& id) const {
        const double v = number(id);
        if (!(v >= 0.0) || v != std::floor(v) || v > 1e12) fail(id, id + " must be a non-negative integer");
        return static_cast<std::size_t>(v);
    }

    std::uint64_t unsigned64(const std::string& id) const {
        const auto& s = text(id);
        std::uint64_t v = 0;
        const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
        if (r.ec != std::errc() || r.ptr != s.data() + s.size()) fail(id, id + ": '" + s + "' is not an unsigned integer");
        return v;
    }

    std::vector<std::string> words(const std::string& id) const {
        std::vector<std::string> out;
        std::stringstream ss(text(id));
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.empty()) fail(id, id + ": empty list entry");
            out.push_back(item);
        }
        return out;
    }

    std::vector<double> numbers(const std::string& id) const {
        std::vector<double> out;
        for (const auto& w : words(id)) {
            double v = 0.0;
            const auto r = std::from_chars(w.data(), w.data() + w.size(), v);
            if (r.ec != std::errc() || r.ptr != w.data() + w.size()) fail(id, id + ": '" + w + "' is not a number");
            out.push_back(v);
        }
        return out;
    }

    bool flag(const std::string& id) const {
        const auto& s = text(id);
        if (s == "true" || s == "1" || s == "yes") return true;
        if (s == "false" || s == "0" || s == "no") return false;
        fail(id, id + ": expected true or false, got '" + s + "'");
    }

    template <typename E>
    E choice(const std::string& id, const std::vector<std::pair<std::string, E>>& options) const {
        std::string names;
        for (const auto& [name, value] : options) {
            if (text(id) == name) return value;
            names += (names.empty() ? "" : ", ") + name;
        }
        fail(id, id + ": '" + text(id) + "' is not one of " + names);
    }

    /// Runs a module validation and reports failures against a section.
    template <typename Fn>
    void check(const std::string& section, Fn&& fn) const {
        try {
            fn();
        } catch (const Error& e) {
            fail(section, "[" + section + "] " + e.what());
        }
    }

private:
    std::string source_;
    std::map<std::string, int> lines_;
    std::map<std::string, std::string> values_;
};

}  // namespace

std::string default_config_text() {
    std::string out;
    for (const auto& sec : schema()) {
        out += "[" + sec.name + "]\n";
        for (const auto& k : sec.keys) out += k.name + " = " + k.fallback + "\n";
        out += "\n";
    }
    return out;
}

std::string ExperimentConfig::canonical_text() const {
    std::string out;
    for (const auto& [section, keys] : raw) {
        out += "[" + section + "]\n";
        for (const auto& [k, v] : keys)
            if (!(section == "run" && k == "out")) out += k + " = " + v + "\n";
    }
    return out;
}

std::uint64_t ExperimentConfig::hash() const { return Fnv1a().text(canonical_text()).digest(); }

ExperimentConfig load_config(const std::optional<std::filesystem::path>& path, const Overrides& overrides,
                             std::optional<std::uint64_t> seed) {
    std::string text;
    const std::string source = path ? path->string() : "config";
    if (path) text = io::read_file(*path);
    Values v(source, key_lines(text));

    if (path) {
        boost::property_tree::ptree tree;
        std::istringstream in(text);
        try {
            boost::property_tree::ini_parser::read_ini(in, tree);
        } catch (const boost::property_tree::ini_parser_error& e) {
            throw DomainError(source + ":" + std::to_string(e.line()) + ": " + e.message());
        }
        for (const auto& [section, body] : tree) {
            if (body.empty()) v.fail(section, "key '" + section + "' outside a section");
            for (const auto& [key, value] : body) v.set(section + "." + key, value.data());
        }
    }
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        const auto dot = o.find('.');
        if (eq == std::string::npos || dot == std::string::npos || dot > eq)
            throw UsageError("override '" + o + "' must look like section.key=value");
        v.set(trim(o.substr(0, eq)), o.substr(eq + 1));
    }
    if (seed) v.set("run.seed", std::to_string(*seed));

    ExperimentConfig cfg;
    cfg.seed = v.unsigned64("run.seed");
    if (v.has("run.out")) cfg.out = v.text("run.out");

    // Trap: explicit secular frequency, explicit (q_z, a_z), or electrode voltages.
    const double omega_rf = c::two_pi * 1e6 * v.number("trap.rf_freq_mhz");
    GeometryFactor geometry{v.number("trap.q_per_volt"), v.number("trap.a_per_volt")};
    v.check("trap", [&] {
        if (v.has("trap.secular_freq_khz")) {
            if (v.has("trap.a_z")) v.fail("trap.a_z", "trap.a_z cannot be combined with secular_freq_khz");
            const double q = v.has("trap.q_z") ? v.number("trap.q_z") : geometry.q_per_volt * v.number("trap.v_rf_vpp");
            cfg.trap = TrapConfig::from_secular(omega_rf, q, c::two_pi * 1e3 * v.number("trap.secular_freq_khz"));
        } else if (v.has("trap.q_z") || v.has("trap.a_z")) {
            cfg.trap = TrapConfig::from_voltages(omega_rf, v.number("trap.v_rf_vpp"), v.number("trap.u_dc_v"), geometry);
            cfg.trap.q_z = v.number("trap.q_z");
            cfg.trap.a_z = v.number("trap.a_z");
        } else {
            cfg.trap = TrapConfig::from_voltages(omega_rf, v.number("trap.v_rf_vpp"), v.number("trap.u_dc_v"), geometry);
        }
        cfg.trap.geometry = geometry;
        cfg.trap.validate();
    });
    const double omega_z = secular_frequency(cfg.trap);

    v.check("crystal", [&] {
        for (const auto& label : v.words("crystal.species")) cfg.crystal.species.push_back(IonSpecies::lookup(label));
        cfg.crystal.gamma_z = v.number("crystal.gamma_z_per_s");
        cfg.crystal.validate();
    });

    v.check("drive", [&] {
        cfg.drive.f_e = v.number("drive.amplitude_mvpp") * v.number("drive.force_per_mvpp_n");
        cfg.drive.omega_dip = v.has("drive.freq_khz") ? c::two_pi * 1e3 * v.number("drive.freq_khz") : omega_z;
        cfg.drive.phase = v.number("drive.phase_rad");
        cfg.drive.validate();
    });

    v.check("noise", [&] {
        cfg.noise.v_noise = v.number("noise.v_noise_vpp");
        cfg.noise.psd_per_v2 = v.number("noise.psd_per_v2");
        if (v.has("noise.background_psd"))
            cfg.noise.background_psd = v.number("noise.background_psd");
        else
            cfg.noise.background_psd = NoiseSpec::thermal_psd(cfg.crystal.species.front().mass, cfg.crystal.gamma_z,
                                                              1e-3 * v.number("noise.background_temperature_mk"));
        cfg.noise.correlation = v.choice<NoiseCorrelation>(
            "noise.correlation", {{"correlated", NoiseCorrelation::correlated},
                                  {"independent", NoiseCorrelation::independent}});
        cfg.noise.validate();
        cfg.heating = {v.number("noise.s_e"), v.number("noise.zeta"), v.number("noise.k_const")};
        cfg.heating.validate();
    });

    v.check("optics", [&] {
        cfg.optics.lorentzian_fwhm = 1e-6 * v.number("optics.psf_fwhm_um");
        cfg.optics.magnification = v.number("optics.magnification");
        cfg.optics.pixel_size_effective = 1e-6 * v.number("optics.pixel_um");
        cfg.optics.photon_rate = v.number("optics.photon_rate_per_s");
        cfg.optics.exposure = v.number("optics.exposure_s");
        cfg.optics.pixels_axial = v.count("optics.pixels_axial");
        cfg.optics.pixels_radial = v.count("optics.pixels_radial");
        cfg.optics.center = 1e-6 * v.number("optics.center_um");
        cfg.optics.validate();
    });

    v.check("sim", [&] {
        cfg.sim.dt = 1e-9 * v.number("sim.dt_ns");
        cfg.sim.duration = 1e-3 * v.number("sim.duration_ms");
        cfg.sim.mode = v.choice<SimMode>("sim.mode", {{"secular", SimMode::secular},
                                                      {"full_mathieu", SimMode::full_mathieu}});
        cfg.sim.ensemble_size = v.count("sim.ensemble");
        cfg.sim.record_stride = v.count("sim.record_stride");
        cfg.sim.settle_fraction = v.number("sim.settle_fraction");
        cfg.sim.seed = cfg.seed;
        if (!(cfg.sim.dt >= 0.0)) throw DomainError("dt_ns must be >= 0");
        if (!(cfg.sim.duration > 0.0)) throw DomainError("duration_ms must be positive");
        if (cfg.sim.ensemble_size < 1) throw DomainError("ensemble must be >= 1");
        if (cfg.sim.record_stride < 1) throw DomainError("record_stride must be >= 1");
        if (!(cfg.sim.settle_fraction >= 0.0 && cfg.sim.settle_fraction < 1.0))
            throw DomainError("settle_fraction must lie in [0, 1)");
        (void)resolve_time_step(cfg.crystal, cfg.trap, cfg.drive, cfg.sim);
    });

    v.check("scan", [&] {
        cfg.scan = {c::two_pi * 1e3 * v.number("scan.start_khz"), c::two_pi * 1e3 * v.number("scan.stop_khz"),
                    v.count("scan.points")};
        if (!(cfg.scan.omega_start > 0.0 && cfg.scan.omega_stop > cfg.scan.omega_start))
            throw DomainError("need 0 < start_khz < stop_khz");
        if (cfg.scan.points < 5) throw DomainError("points must be >= 5");
    });

    v.check("sweep", [&] {
        cfg.sweep.v2 = v.has("sweep.v2") ? v.numbers("sweep.v2") : std::vector<double>{};
        for (double x : cfg.sweep.v2)
            if (!(x >= 0.0) || !std::isfinite(x)) throw DomainError("v2 entries must be finite and >= 0");
        cfg.sweep.observable = v.choice<SweepObservable>("sweep.observable", {{"ion", SweepObservable::ion},
                                                                              {"com", SweepObservable::com}});
        cfg.sweep.window_min = v.number("sweep.window_min_v2");
        cfg.sweep.window_max = v.number("sweep.window_max_v2");
        if (!(cfg.sweep.window_max > cfg.sweep.window_min)) throw DomainError("need window_min_v2 < window_max_v2");
        cfg.sweep.morphology = v.flag("sweep.morphology");
    });

    v.check("spectrum", [&] {
        cfg.spectrum.mu = v.number("spectrum.mu");
        if (!(cfg.spectrum.mu > 0.0) || !std::isfinite(cfg.spectrum.mu)) throw DomainError("mu must be positive");
        cfg.spectrum.span = c::two_pi * 1e3 * v.number("spectrum.span_khz");
        cfg.spectrum.points = v.count("spectrum.points");
        if (!(cfg.spectrum.span > 0.0)) throw DomainError("span_khz must be positive");
        if (cfg.spectrum.points < 3) throw DomainError("points must be >= 3");
        cfg.spectrum.omega_ref = v.has("spectrum.ref_khz") ? c::two_pi * 1e3 * v.number("spectrum.ref_khz") : omega_z;
        if (!(cfg.spectrum.omega_ref > 0.0)) throw DomainError("ref_khz must be positive");
    });

    v.check("modes", [&] {
        cfg.modes_mu = v.numbers("modes.mu");
        for (double mu : cfg.modes_mu)
            if (!(mu > 0.0) || !std::isfinite(mu)) throw DomainError("mu entries must be positive");
    });

    v.check("render", [&] {
        cfg.render.source = v.choice<RenderSource>(
            "render.source", {{"simulate", RenderSource::simulate}, {"single", RenderSource::single},
                              {"two-ion", RenderSource::two_ion}, {"thermal", RenderSource::thermal}});
        cfg.render.rho_max = 1e-6 * v.number("render.rho_um");
        cfg.render.sigma = 1e-6 * v.number("render.sigma_um");
        cfg.render.z0 = 1e-6 * v.number("render.z0_um");
        cfg.render.write_trajectory = v.flag("render.write_trajectory");
        if (!(cfg.render.rho_max >= 0.0) || !(cfg.render.sigma > 0.0))
            throw DomainError("need rho_um >= 0 and sigma_um > 0");
    });

    for (const auto& sec : schema()) {
        std::vector<std::pair<std::string, std::string>> keys;
        for (const auto& k : sec.keys) keys.emplace_back(k.name, v.text(sec.name + "." + k.name));
        cfg.raw.emplace_back(sec.name, std::move(keys));
    }
    return cfg;
}

}  // namespace iontrap::cli
