#pragma once

#include <optional>

#include "iontrap/parallel.hpp"
#include "iontrap/random.hpp"

namespace iontrap {

template <typename R>
std::vector<R> run_ensemble(const CrystalConfig& crystal, const TrapConfig& trap,
                            const DriveSpec& drive, const NoiseSpec& noise, const SimConfig& sim,
                            const std::function<R(const Trajectory&)>& reduce) {
    const std::size_t n = sim.ensemble_size;
    std::vector<std::optional<R>> slots(n);
    parallel_for(n, [&](std::size_t i) {
        SimConfig member = sim;
        member.seed = derive_seed(sim.seed, i);
        slots[i].emplace(reduce(simulate(crystal, trap, drive, noise, member)));
    });
    std::vector<R> out;
    out.reserve(n);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

}  // namespace iontrap
