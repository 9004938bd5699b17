#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace dpsqkd {

// splitmix64 step; also used to expand seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Derive a child seed from a master seed and a stream label, so that each
// subsystem (source, channel, detector, attack, ...) draws from its own
// stream and toggling one does not perturb the others.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stream) {
    std::uint64_t h = 0xcbf29ce484222325ULL; // FNV-1a
    for (char c : stream) {
        h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
        h *= 0x100000001b3ULL;
    }
    std::uint64_t s = master ^ h;
    return splitmix64(s);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    std::uint64_t s = master ^ (0x9e3779b97f4a7c15ULL * (index + 1));
    return splitmix64(s);
}

// xoshiro256++ with hand-rolled samplers. Distribution draws are pinned to
// this implementation (not the standard library's), so a given seed yields
// the same event sequence on every platform/build.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& w : state_) w = splitmix64(sm);
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

    bool bernoulli(double p) { return uniform() < p; }

    // Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) {
        return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
    }

    // Box-Muller, cosine branch only (keeps the draw count per call fixed).
    double normal(double sigma) {
        double u1 = 1.0 - uniform(); // (0, 1]
        double u2 = uniform();
        return sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    double exponential(double rate) {
        return -std::log(1.0 - uniform()) / rate;
    }

    // Knuth multiplication method; fine for the per-pulse means used here.
    int poisson(double mean) {
        if (mean <= 0.0) return 0;
        const double limit = std::exp(-mean);
        int k = 0;
        double prod = uniform();
        while (prod > limit) {
            ++k;
            prod *= uniform();
        }
        return k;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::uint64_t state_[4];
};

} // namespace dpsqkd
