#pragma once

#include <cmath>
#include <cstdint>

// Deterministic RNG used everywhere randomness is needed. std::mt19937 with
// std::normal_distribution would leave the draw sequence implementation
// defined, which breaks byte-reproducible datasets and checkpoints, so we
// carry our own xoshiro256++ plus Box-Muller.

namespace cyclocast {

inline std::uint64_t splitmix64(std::uint64_t& s) {
    std::uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t s = seed;
        for (auto& w : state_) w = splitmix64(s);
        have_spare_ = false;
        spare_ = 0.0;
    }

    // Independent substream: mixes a stream tag into the seed. Used to give
    // every storm / epoch / step its own reproducible stream.
    Rng fork(std::uint64_t tag) const {
        std::uint64_t s = state_[0] ^ (tag * 0x9e3779b97f4a7c15ULL + 0x42ULL);
        s ^= state_[2] + (tag << 1);
        return Rng(s);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n).
    std::uint64_t uniform_below(std::uint64_t n) {
        // Rejection-free would bias for huge n; n here is small (dataset
        // sizes, timestep counts), so modulo of a fresh 64-bit draw is fine.
        return next_u64() % n;
    }

    // Standard normal via Box-Muller. Pairs are cached, so draw counts stay
    // deterministic.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    void fill_gaussian(double* dst, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) dst[i] = gaussian();
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4];
    bool have_spare_;
    double spare_;
};

}  // namespace cyclocast
