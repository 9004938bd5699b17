#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <utility>
#include <vector>

#include "dpsqkd/common.hpp"
#include "dpsqkd/rng.hpp"

namespace dpsqkd {

// Binary per-bin phase pattern. Each entry is 0 (phase 0) or 1 (phase pi);
// the key lives in the N-1 phase differences between adjacent bins, so a
// length-N pattern encodes N-1 bits (equal adjacent phases -> bit 0).
class PhasePattern {
public:
    explicit PhasePattern(std::vector<std::uint8_t> half_turns)
        : half_turns_(std::move(half_turns)) {
        if (half_turns_.size() < 2)
            throw ConfigError("phase pattern needs at least 2 bins");
        for (auto v : half_turns_)
            if (v > 1) throw ConfigError("phase pattern entries must be 0 (phase 0) or 1 (phase pi)");
    }

    // Build the pattern whose phase differences equal the given bits, with
    // the first bin fixed to phase 0 (global phase is unobservable).
    static PhasePattern from_difference_bits(const std::vector<std::uint8_t>& bits) {
        std::vector<std::uint8_t> phases(bits.size() + 1);
        phases[0] = 0;
        for (std::size_t i = 0; i < bits.size(); ++i)
            phases[i + 1] = phases[i] ^ (bits[i] & 1u);
        return PhasePattern(std::move(phases));
    }

    std::size_t size() const { return half_turns_.size(); }
    std::uint8_t half_turn(std::size_t i) const { return half_turns_[i]; }
    double phase(std::size_t i) const { return half_turns_[i] ? kPi : 0.0; }
    // +1 for phase 0, -1 for phase pi.
    double sign(std::size_t i) const { return half_turns_[i] ? -1.0 : 1.0; }

    bool operator==(const PhasePattern& other) const { return half_turns_ == other.half_turns_; }

private:
    std::vector<std::uint8_t> half_turns_;
};

// bit_i = 0 iff phases i and i+1 are equal.
inline std::vector<std::uint8_t> differential_bits(const PhasePattern& pattern) {
    std::vector<std::uint8_t> bits(pattern.size() - 1);
    for (std::size_t i = 0; i + 1 < pattern.size(); ++i)
        bits[i] = pattern.half_turn(i) ^ pattern.half_turn(i + 1);
    return bits;
}

// Single photon spread over N time-bins, one complex amplitude per bin.
struct TimeBinState {
    std::vector<std::complex<double>> amplitudes;
    double bin_width_s = 0.0;

    std::size_t n_bins() const { return amplitudes.size(); }

    double total_probability() const {
        double s = 0.0;
        for (const auto& a : amplitudes) s += std::norm(a);
        return s;
    }
};

// |psi> = (1/sqrt(N)) sum_i exp(i phi_i) |i>. With a binary pattern the
// amplitudes are exactly +-1/sqrt(N).
inline TimeBinState make_superposition(int n_bins, const PhasePattern& pattern, double bin_width_s) {
    if (n_bins < 2) throw ConfigError("superposition needs at least 2 bins");
    if (static_cast<std::size_t>(n_bins) != pattern.size())
        throw ConfigError("phase pattern length does not match bin count");
    if (bin_width_s <= 0.0) throw ConfigError("bin width must be positive");
    TimeBinState state;
    state.bin_width_s = bin_width_s;
    state.amplitudes.resize(n_bins);
    const double amp = 1.0 / std::sqrt(static_cast<double>(n_bins));
    for (int i = 0; i < n_bins; ++i)
        state.amplitudes[i] = std::complex<double>(amp * pattern.sign(i), 0.0);
    return state;
}

// Probability over (output bin, detector port) behind the delay-line
// interferometer. Output bins are 1..N+1; bins 1 and N+1 are the edge bins
// that interfere with vacuum and carry no key information.
struct DetectionDistribution {
    // probabilities[k][port] is the mass of output bin k+1 on the given port.
    std::vector<std::array<double, 2>> probabilities;
    double bin_width_s = 0.0;

    int n_output_bins() const { return static_cast<int>(probabilities.size()); }

    double probability(int bin, int port) const {
        return probabilities[static_cast<std::size_t>(bin - 1)][static_cast<std::size_t>(port)];
    }

    double total() const {
        double s = 0.0;
        for (const auto& p : probabilities) s += p[0] + p[1];
        return s;
    }
};

// One-bin delay-line interferometer. Output bin k interferes amplitude k
// with amplitude k-1 (a_0 = a_{N+1} = 0):
//   p(k, port+-) = (|a_k|^2 + |a_{k-1}|^2 +- 2 V Re(a_k conj(a_{k-1}))) / 4
// Port 0 is the constructive port for zero phase difference. The cross
// terms cancel between ports, so the distribution sums to 1 for any V.
inline DetectionDistribution dli_transform(const TimeBinState& state, double visibility) {
    if (visibility < 0.0 || visibility > 1.0)
        throw ConfigError("visibility must lie in [0, 1]");
    if (std::abs(state.total_probability() - 1.0) > 1e-9)
        throw std::domain_error("dli_transform requires a normalized input state");

    const std::size_t n = state.n_bins();
    DetectionDistribution dist;
    dist.bin_width_s = state.bin_width_s;
    dist.probabilities.resize(n + 1);
    for (std::size_t k = 0; k <= n; ++k) {
        const std::complex<double> prev = (k == 0) ? std::complex<double>(0.0) : state.amplitudes[k - 1];
        const std::complex<double> cur = (k == n) ? std::complex<double>(0.0) : state.amplitudes[k];
        const double direct = std::norm(cur) + std::norm(prev);
        const double cross = 2.0 * visibility * (cur * std::conj(prev)).real();
        dist.probabilities[k][0] = (direct + cross) / 4.0;
        dist.probabilities[k][1] = (direct - cross) / 4.0;
    }
    return dist;
}

// Draw one (bin, port) pair; bins are 1-based.
inline std::pair<int, int> sample_detection(const DetectionDistribution& dist, RandomStream& rng) {
    double u = rng.uniform() * dist.total();
    const int n_out = dist.n_output_bins();
    for (int k = 0; k < n_out; ++k) {
        for (int port = 0; port < 2; ++port) {
            const double p = dist.probabilities[static_cast<std::size_t>(k)][static_cast<std::size_t>(port)];
            if (u < p) return {k + 1, port};
            u -= p;
        }
    }
    // Rounding tail: return the last outcome with nonzero mass.
    for (int k = n_out - 1; k >= 0; --k)
        for (int port = 1; port >= 0; --port)
            if (dist.probabilities[static_cast<std::size_t>(k)][static_cast<std::size_t>(port)] > 0.0)
                return {k + 1, port};
    return {1, 0};
}

} // namespace dpsqkd
