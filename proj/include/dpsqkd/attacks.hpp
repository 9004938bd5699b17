#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "dpsqkd/common.hpp"
#include "dpsqkd/devices.hpp"
#include "dpsqkd/rng.hpp"
#include "dpsqkd/states.hpp"

namespace dpsqkd {

struct IrAttackConfig {
    double intercept_fraction = 1.0;
    double resend_mean_photon = 1.0;

    void validate() const {
        if (intercept_fraction < 0.0 || intercept_fraction > 1.0)
            throw ConfigError("ir attack: intercept fraction must lie in [0, 1]");
        if (resend_mean_photon <= 0.0)
            throw ConfigError("ir attack: resend photon number must be positive");
    }
};

struct BsAttackConfig {
    double tap_ratio = 0.0;

    void validate() const {
        if (tap_ratio < 0.0 || tap_ratio >= 1.0)
            throw ConfigError("bs attack: tap ratio must lie in [0, 1)");
    }
};

struct IrInterceptOutcome {
    TimeBinState resent;
    // Per difference index: -1 unknown, else the bit Eve learned.
    std::vector<std::int8_t> knowledge;
    std::vector<std::uint8_t> resent_bits;
    int measured_bin = 0;
    int measured_port = 0;
};

// Eve measures with an ideal one-bin interferometer. A click in interference
// bin k reveals difference k-1 (the port is the bit); she then resends a full
// N-bin state with that difference fixed and every other difference drawn
// uniformly. An edge-bin click reveals nothing and the whole resent pattern
// is random.
inline IrInterceptOutcome ir_intercept(const TimeBinState& state, RandomStream& rng) {
    const int n = static_cast<int>(state.n_bins());
    const auto dist = dli_transform(state, 1.0);
    const auto [bin, port] = sample_detection(dist, rng);

    IrInterceptOutcome out;
    out.measured_bin = bin;
    out.measured_port = port;
    out.knowledge.assign(static_cast<std::size_t>(n - 1), -1);
    out.resent_bits.resize(static_cast<std::size_t>(n - 1));
    for (auto& b : out.resent_bits) b = rng.bernoulli(0.5) ? 1 : 0;
    if (bin >= 2 && bin <= n) {
        const int learned = bin - 1; // difference index, 1-based
        out.resent_bits[static_cast<std::size_t>(learned - 1)] = static_cast<std::uint8_t>(port);
        out.knowledge[static_cast<std::size_t>(learned - 1)] = static_cast<std::int8_t>(port);
    }
    out.resent = make_superposition(n, PhasePattern::from_difference_bits(out.resent_bits),
                                    state.bin_width_s);
    return out;
}

// Sifted-key error rate induced by a full intercept-resend attack:
// an edge outcome (probability 1/N) leaves all differences random, an
// informed outcome fixes one of the N-1 differences. Both close to
//   QBER_IR(N) = (N-1) / (2N),
// which is 1/4 at N=2, 1/3 at N=3 and tends to 1/2 for large N.
inline double ir_qber_exact(int n_bins) {
    if (n_bins < 2) throw std::domain_error("ir_qber_exact: need at least 2 bins");
    return static_cast<double>(n_bins - 1) / (2.0 * static_cast<double>(n_bins));
}

// Fraction of nonempty pulses carrying more than one photon,
// P(k >= 2) / P(k >= 1) for Poisson photon statistics.
inline double multi_photon_fraction(double mu) {
    if (mu <= 0.0) throw std::domain_error("multi_photon_fraction: mu must be positive");
    const double p_ge1 = -std::expm1(-mu);
    const double p_ge2 = p_ge1 - mu * std::exp(-mu);
    return p_ge2 / p_ge1;
}

struct BsAttackOutcome {
    ChannelConfig channel;
    // Diagnostic upper bound on Eve's information gain: multi-photon
    // fraction times the photon flux she taps (photons/s).
    double eve_info_rate = 0.0;
};

inline BsAttackOutcome bs_attack_apply(const ChannelConfig& channel, const BsAttackConfig& cfg,
                                       double mu, double rep_rate_hz) {
    cfg.validate();
    BsAttackOutcome out;
    out.channel = channel;
    if (cfg.tap_ratio > 0.0) {
        out.channel.insertion_loss_db += -10.0 * std::log10(1.0 - cfg.tap_ratio);
        out.eve_info_rate = multi_photon_fraction(mu) * cfg.tap_ratio * mu * rep_rate_hz;
    }
    return out;
}

} // namespace dpsqkd
