#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "iontrap/dynamics.hpp"
#include "iontrap/imaging.hpp"
#include "iontrap/physics.hpp"

namespace iontrap::cli {

struct ScanSettings {
    double omega_start = 0.0;  // rad/s
    double omega_stop = 0.0;
    std::size_t points = 0;
};

enum class SweepObservable { ion, com };

struct SweepSettings {
    std::vector<double> v2;  // V^2
    SweepObservable observable = SweepObservable::ion;
    double window_min = 0.0;
    double window_max = 0.0;
    bool morphology = false;
};

struct SpectrumSettings {
    double mu = 0.0;
    double span = 0.0;  // rad/s, half-width around each resonance
    std::size_t points = 0;
    double omega_ref = 0.0;  // rad/s
};

enum class RenderSource { simulate, single, two_ion, thermal };

struct RenderSettings {
    RenderSource source = RenderSource::simulate;
    double rho_max = 0.0;  // m
    double sigma = 0.0;    // m
    double z0 = 0.0;       // m
    bool write_trajectory = false;
};

/// Everything a run needs, in SI units.
struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::optional<std::filesystem::path> out;
    TrapConfig trap;
    CrystalConfig crystal;
    DriveSpec drive;
    NoiseSpec noise;
    HeatingModel heating;
    OpticsConfig optics;
    SimConfig sim;
    ScanSettings scan;
    SweepSettings sweep;
    SpectrumSettings spectrum;
    std::vector<double> modes_mu;
    RenderSettings render;

    /// Effective raw values (section, key) -> text, defaults filled in.
    std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::string>>>> raw;

    /// INI text of every setting except run.out, in schema order.
    std::string canonical_text() const;
    std::uint64_t hash() const;
};

/// Overrides given as "section.key=value".
using Overrides = std::vector<std::string>;

/// Parses an INI file (or only defaults when `path` is empty), applies the
/// overrides and an optional seed, converts units and validates every module
/// type. Unknown sections or keys and malformed values throw ConfigError with
/// the file line where known.
ExperimentConfig load_config(const std::optional<std::filesystem::path>& path, const Overrides& overrides,
                             std::optional<std::uint64_t> seed);

/// Reference text of all sections, keys and defaults.
std::string default_config_text();

}  // namespace iontrap::cli
