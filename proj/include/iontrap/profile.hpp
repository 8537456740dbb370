#pragma once

#include <vector>

namespace iontrap {

/// Photon counts binned along the trap axis. Bins are uniform; centers in m.
struct AxialProfile {
    std::vector<double> bin_centers;
    std::vector<double> counts;
    std::vector<double> uncertainties;

    /// Builds a profile with sqrt(counts) uncertainties.
    static AxialProfile from_counts(std::vector<double> centers, std::vector<double> counts);

    std::size_t size() const noexcept { return counts.size(); }
    double bin_width() const;
    double total() const;
    /// Uniform grid, matching lengths, counts >= 0. Throws DomainError.
    void validate() const;
};

}  // namespace iontrap
