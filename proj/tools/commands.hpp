#pragma once

#include <filesystem>
#include <string>

#include "config.hpp"
#include "run.hpp"

namespace iontrap::cli {

void cmd_modes(const ExperimentConfig& cfg, Run& run);
void cmd_scan(const ExperimentConfig& cfg, Run& run);
void cmd_noise_sweep(const ExperimentConfig& cfg, Run& run);
void cmd_predict_spectrum(const ExperimentConfig& cfg, Run& run);
void cmd_render(const ExperimentConfig& cfg, Run& run);

struct FitInput {
    std::filesystem::path profile;
    std::string model;  // single, two-ion or thermal
    std::string text;   // file contents
};
void cmd_fit(const ExperimentConfig& cfg, const FitInput& input, Run& run);

/// Steady-state complex response amplitude of each ion to a uniform force
/// f_e cos(omega t) (scaled by charge), from the linearized normal modes.
std::vector<double> linear_response(const CrystalConfig& crystal, double stiffness, double f_e, double omega);

}  // namespace iontrap::cli
