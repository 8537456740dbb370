#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "iontrap/fitting.hpp"
#include "iontrap/imaging.hpp"
#include "iontrap/profile.hpp"
#include "iontrap/trajectory.hpp"

namespace iontrap::io {

/// Scientific notation with 9 significant digits.
std::string format_double(double x);

/// Writes `content` to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

/// CSV text with one header row; every column must have the same length.
std::string csv_text(const std::vector<std::string>& header,
                     const std::vector<std::vector<double>>& columns);

/// Trajectory as `t,z1,v1[,z2,v2]` in SI units.
std::string trajectory_csv(const Trajectory& traj);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

/// Parses numeric CSV with a header row. Errors name the offending row
/// (1-based line number in the file). An empty file is a UsageError.
CsvTable parse_csv(const std::string& text, const std::string& source = "csv");

/// Axial profile from a table whose first column is z_m and second the counts;
/// an optional third column gives the uncertainties.
AxialProfile profile_from_csv(const CsvTable& table);

/// Binary 16-bit PGM (P5, big-endian); counts above 65535 saturate.
std::string pgm_bytes(const Image& image);
/// Pixel matrix as CSV rows without a header.
std::string image_csv(const Image& image);
/// Reads back a 16-bit P5 image.
Image parse_pgm(const std::string& bytes);

/// Fit as JSON: model, params, uncertainties, derived values, chi2_per_dof,
/// convergence data and residuals.
nlohmann::ordered_json fit_to_json(const FitResult& fit);

}  // namespace iontrap::io
