#pragma once

#include <cstdint>
#include <random>

namespace spintrack {

/// Independent random streams of one trajectory.
enum class RngStream : std::uint64_t {
    kMeasurement = 0,  ///< photocurrent / backaction dW
    kSignal = 1,       ///< initial field draw, then dW_omega or dW_n
    kAtomNumber = 2,   ///< atom-number draw at t = 0
};

/// SplitMix64 finalizer.
inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seed of stream `stream` of trajectory `index`: three chained SplitMix64
/// rounds over (base, index, stream). Any (base, index, stream) triple is
/// addressable without generating the others.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index, RngStream stream) {
    std::uint64_t h = splitmix64(base);
    h = splitmix64(h ^ index);
    return splitmix64(h ^ static_cast<std::uint64_t>(stream));
}

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t base, std::uint64_t index, RngStream stream) {
    return Engine(derive_seed(base, index, stream));
}

/// Gaussian atom number, redrawn while non-positive. sigma = 0 returns mean.
template <class Gen>
double draw_atom_number(double mean, double sigma, Gen& gen) {
    if (sigma == 0.0) return mean;
    std::normal_distribution<double> dist(mean, sigma);
    double n = dist(gen);
    while (!(n > 0.0)) n = dist(gen);
    return n;
}

}  // namespace spintrack
