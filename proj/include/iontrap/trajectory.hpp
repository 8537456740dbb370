#pragma once

#include <cstdint>
#include <vector>

namespace iontrap {

enum class SimMode { secular, full_mathieu };

/// Recorded time series. positions[i][k] is ion i at times[k].
struct Trajectory {
    std::vector<double> times;
    std::vector<std::vector<double>> positions;
    std::vector<std::vector<double>> velocities;
    SimMode mode = SimMode::secular;
    /// Integration step (s); samples are spaced by dt * record_stride.
    double dt = 0.0;
    std::size_t record_stride = 1;
    /// Fingerprint of everything except the seed; equal for ensemble members.
    std::uint64_t config_id = 0;

    std::size_t ions() const noexcept { return positions.size(); }
    std::size_t samples() const noexcept { return times.size(); }
    double sample_interval() const noexcept { return dt * static_cast<double>(record_stride); }
    /// Index of the first sample at or after settle_fraction * duration.
    std::size_t settle_index(double settle_fraction) const;
};

}  // namespace iontrap
