#include <iostream>
#include <optional>

#include "CLI11.hpp"

#include "commands.hpp"
#include "config.hpp"
#include "iontrap/error.hpp"
#include "iontrap/hash.hpp"
#include "iontrap/io.hpp"
#include "run.hpp"

using namespace iontrap;
using namespace iontrap::cli;

namespace {

int exit_code(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::numerical: return 3;
    case ErrorKind::io: return 4;
    }
    return 3;
}

struct Common {
    std::optional<std::string> config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::vector<std::string> set;
    bool force = false;
};

void add_common(CLI::App* cmd, Common& o) {
    cmd->add_option("--config", o.config, "INI configuration file");
    cmd->add_option("--seed", o.seed, "master seed (overrides [run] seed)");
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--set", o.set, "override a setting, section.key=value (repeatable)");
    cmd->add_flag("--force", o.force, "allow writing into a non-empty output directory");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Trapped-ion crystal simulation, imaging and fitting"};
    app.set_version_flag("--version", IONTRAP_VERSION);
    app.require_subcommand(1);
    Common o;
    FitInput fit_input;
    std::string profile_path;

    auto* modes = app.add_subcommand("modes", "secular frequency, separation, eigenfrequencies, heating rates");
    auto* scan = app.add_subcommand("scan", "simulated drive-frequency scan with resonance fit");
    auto* sweep = app.add_subcommand("noise-sweep", "position variance versus noise intensity");
    auto* spectrum = app.add_subcommand("predict-spectrum", "predicted two-ion motional spectrum");
    auto* fit = app.add_subcommand("fit", "fit an axial profile CSV");
    auto* render = app.add_subcommand("render", "synthetic camera image and axial projection");
    auto* defaults = app.add_subcommand("defaults", "print every configuration key with its default");
    for (auto* cmd : {modes, scan, sweep, spectrum, fit, render}) add_common(cmd, o);
    fit->add_option("--profile", profile_path, "profile CSV (z_m,counts[,uncertainty])")->required();
    fit->add_option("--model", fit_input.model, "single, two-ion or thermal")
        ->required()
        ->check(CLI::IsMember({"single", "two-ion", "thermal"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    if (defaults->parsed()) {
        std::cout << default_config_text();
        return 0;
    }

    const auto* cmd = app.get_subcommands().front();
    std::optional<Run> run;
    try {
        std::optional<std::filesystem::path> cfg_path;
        if (o.config) cfg_path = *o.config;
        const auto cfg = load_config(cfg_path, o.set, o.seed);
        std::uint64_t hash = cfg.hash();
        if (fit->parsed()) {
            fit_input.profile = profile_path;
            fit_input.text = io::read_file(fit_input.profile);
            hash = Fnv1a().value(hash).text(fit_input.model).text(fit_input.text).digest();
        }
        std::optional<std::filesystem::path> out;
        if (o.out) out = *o.out;
        run.emplace(cmd->get_name(), cfg, hash, out, o.force);

        if (modes->parsed()) cmd_modes(cfg, *run);
        if (scan->parsed()) cmd_scan(cfg, *run);
        if (sweep->parsed()) cmd_noise_sweep(cfg, *run);
        if (spectrum->parsed()) cmd_predict_spectrum(cfg, *run);
        if (fit->parsed()) cmd_fit(cfg, fit_input, *run);
        if (render->parsed()) cmd_render(cfg, *run);
        run->finish();
        std::cout << "output: " << run->dir().string() << "\n";
        return 0;
    } catch (const Error& e) {
        std::cerr << "iontrap " << cmd->get_name() << ": error: " << e.what() << "\n";
        if (run) {
            try {
                run->finish(e.what());
            } catch (const std::exception&) {
            }
        }
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "iontrap " << cmd->get_name() << ": error: " << e.what() << "\n";
        return 3;
    }
}
