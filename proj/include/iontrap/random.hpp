#pragma once

#include <cstdint>
#include <random>

#include <boost/random/normal_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>

namespace iontrap {

/// SplitMix64 finalizer applied to (master, index): the sub-seed of stream
/// `index` under `master`. Distinct indices give decorrelated seeds.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
    std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// One random stream: MT19937-64 engine with Boost's ziggurat normal sampler.
/// Both algorithms are fully specified, so a seed reproduces the same
/// sequence everywhere.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

    double normal() { return normal_(engine_); }
    double uniform() { return std::generate_canonical<double, 53>(engine_); }
    std::uint64_t poisson(double mean) {
        if (!(mean > 0.0)) return 0;
        boost::random::poisson_distribution<std::uint64_t, double> d(mean);
        return d(engine_);
    }

private:
    std::mt19937_64 engine_;
    boost::random::normal_distribution<double> normal_;
};

}  // namespace iontrap
