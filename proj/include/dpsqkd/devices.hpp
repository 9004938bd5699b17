#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <queue>
#include <vector>

#include "dpsqkd/common.hpp"
#include "dpsqkd/rng.hpp"

namespace dpsqkd {

enum class SourceScheme { time_bin, spatial_path };

struct MultiplexConfig {
    // Fiber delay added to one DLI output port so both ports share one
    // detector and are told apart by arrival time.
    double port_delay_s = 10e-9;
    // 2x1 combiner; about half of the photons are lost here.
    double coupler_loss_db = 3.0103;

    void validate() const {
        if (port_delay_s <= 0.0) throw ConfigError("multiplex: port delay must be positive");
        if (coupler_loss_db < 0.0) throw ConfigError("multiplex: coupler loss must be >= 0 dB");
    }
};

struct SourceConfig {
    double rep_rate_hz = 62.5e6;
    double mean_photon_number = 0.17;
    int n_bins = 3;
    double bin_width_s = 1e-9;
    // Intensity-modulator on/off contrast; leakage during the off time shows
    // up as background clicks at relative intensity 10^(-ER/10).
    double extinction_ratio_db = 18.0;
    // Phase-modulator transition time; a photon whose sub-bin position falls
    // inside the transition sees an intermediate phase difference.
    double rise_fall_time_s = 84e-12;
    SourceScheme scheme = SourceScheme::time_bin;

    double period_s() const { return 1.0 / rep_rate_hz; }

    void validate(const MultiplexConfig& mux) const {
        if (rep_rate_hz <= 0.0) throw ConfigError("source: rep rate must be positive");
        if (mean_photon_number <= 0.0) throw ConfigError("source: mean photon number must be positive");
        if (n_bins < 2) throw ConfigError("source: need at least 2 time-bins");
        if (bin_width_s <= 0.0) throw ConfigError("source: bin width must be positive");
        if (extinction_ratio_db < 0.0) throw ConfigError("source: extinction ratio must be >= 0 dB");
        if (rise_fall_time_s < 0.0 || rise_fall_time_s > bin_width_s)
            throw ConfigError("source: rise/fall time must lie in [0, bin_width]");
        if (mux.port_delay_s <= (n_bins + 1) * bin_width_s)
            throw ConfigError("multiplex: port delay must exceed (N+1) x bin width (port images overlap)");
        if (period_s() <= (n_bins + 1) * bin_width_s + mux.port_delay_s)
            throw ConfigError("source: pulse period must exceed (N+1) x bin width + multiplex delay");
    }
};

struct ChannelConfig {
    double length_km = 30.0;
    double attenuation_db_per_km = 0.2;
    double insertion_loss_db = 2.0;

    void validate() const {
        if (length_km < 0.0) throw ConfigError("channel: length must be >= 0");
        if (attenuation_db_per_km < 0.0) throw ConfigError("channel: attenuation must be >= 0");
        if (insertion_loss_db < 0.0) throw ConfigError("channel: insertion loss must be >= 0");
    }
};

struct SpdConfig {
    double efficiency = 0.1;
    double dark_count_rate_hz = 800.0;
    double afterpulse_prob = 0.08;
    double hold_off_s = 10e-6;
    double jitter_sigma_s = 162e-12;
    double gate_width_s = 16e-9;
    double gate_delay_s = 0.0;
    // Gate repetition period; tied to the source clock in a session.
    double gate_period_s = 16e-9;

    void validate() const {
        if (efficiency < 0.0 || efficiency > 1.0) throw ConfigError("spd: efficiency must lie in [0, 1]");
        if (dark_count_rate_hz < 0.0) throw ConfigError("spd: dark count rate must be >= 0");
        if (afterpulse_prob < 0.0 || afterpulse_prob >= 1.0)
            throw ConfigError("spd: afterpulse probability must lie in [0, 1)");
        if (hold_off_s < 0.0) throw ConfigError("spd: hold-off time must be >= 0");
        if (jitter_sigma_s < 0.0) throw ConfigError("spd: jitter sigma must be >= 0");
        if (gate_width_s <= 0.0) throw ConfigError("spd: gate width must be positive");
        if (gate_delay_s < 0.0) throw ConfigError("spd: gate delay must be >= 0");
        if (gate_period_s <= 0.0) throw ConfigError("spd: gate period must be positive");
    }

    bool always_gated() const { return gate_width_s >= gate_period_s; }
};

// Poisson photon number of a weak coherent pulse.
inline int photon_count(double mu, RandomStream& rng) {
    if (mu <= 0.0) throw std::domain_error("photon_count: mean photon number must be positive");
    return rng.poisson(mu);
}

// T_L = 10^-((alpha L + I_L)/10)
inline double transmittance(const ChannelConfig& channel) {
    channel.validate();
    return std::pow(10.0, -(channel.attenuation_db_per_km * channel.length_km + channel.insertion_loss_db) / 10.0);
}

// Photon arriving at the detector, tagged with the pulse it came from.
struct Arrival {
    double time_s;
    std::int64_t pulse;
};

// One detector click. pulse/bin/port are filled in by demultiplex; -1 while
// unassigned.
struct TimestampRecord {
    double time_s = 0.0;
    std::int64_t pulse = -1;
    int bin = -1;
    int port = -1;
};

namespace detail {

inline bool in_gate(double t, const SpdConfig& spd) {
    if (spd.always_gated()) return t >= 0.0;
    const double rel = t - std::floor(t / spd.gate_period_s) * spd.gate_period_s;
    return rel >= spd.gate_delay_s && rel < spd.gate_delay_s + spd.gate_width_s;
}

// Afterpulse delay: exponential over subsequent active gates, capped at 5.
inline double afterpulse_time(double reactivation_s, const SpdConfig& spd, RandomStream& rng) {
    const int extra = std::min<int>(4, static_cast<int>(rng.exponential(1.0 / 1.5)));
    const double base = std::ceil((reactivation_s - spd.gate_delay_s) / spd.gate_period_s) * spd.gate_period_s;
    const double gate_start = base + extra * spd.gate_period_s + spd.gate_delay_s;
    const double width = std::min(spd.gate_width_s, spd.gate_period_s);
    return gate_start + rng.uniform() * width;
}

} // namespace detail

// Gated single-photon detector. Arrivals inside a gate survive with
// probability eta and acquire Gaussian timing jitter; dark counts form a
// Poisson process restricted to gate windows; each recorded click can spawn
// one afterpulse in a later gate; clicks within the hold-off after a
// recorded click are discarded.
inline std::vector<TimestampRecord> spd_detect(const std::vector<Arrival>& arrivals,
                                               const SpdConfig& spd,
                                               double duration_s,
                                               RandomStream& rng) {
    spd.validate();
    for (std::size_t i = 1; i < arrivals.size(); ++i)
        if (arrivals[i].time_s < arrivals[i - 1].time_s)
            throw std::domain_error("spd_detect: arrivals must be sorted by time");

    std::vector<double> candidates;
    candidates.reserve(arrivals.size());

    for (const auto& a : arrivals) {
        if (!detail::in_gate(a.time_s, spd)) continue;
        if (spd.efficiency < 1.0 && !rng.bernoulli(spd.efficiency)) continue;
        double t = a.time_s;
        if (spd.jitter_sigma_s > 0.0) t += rng.normal(spd.jitter_sigma_s);
        if (t >= 0.0 && t < duration_s) candidates.push_back(t);
    }

    // Dark counts: exponential gaps, thinned to the gate windows.
    if (spd.dark_count_rate_hz > 0.0) {
        double t = rng.exponential(spd.dark_count_rate_hz);
        while (t < duration_s) {
            if (detail::in_gate(t, spd)) candidates.push_back(t);
            t += rng.exponential(spd.dark_count_rate_hz);
        }
    }

    std::sort(candidates.begin(), candidates.end());

    // Dead-time sweep with afterpulse injection. Afterpulses are fed through
    // the same sweep but never spawn further afterpulses.
    std::priority_queue<double, std::vector<double>, std::greater<>> pending;
    std::vector<TimestampRecord> clicks;
    std::size_t i = 0;
    double reactivate = 0.0;
    auto record = [&](double t, bool primary) {
        if (t < reactivate) return;
        clicks.push_back(TimestampRecord{t});
        reactivate = t + spd.hold_off_s;
        if (primary && spd.afterpulse_prob > 0.0 && rng.bernoulli(spd.afterpulse_prob)) {
            const double tap = detail::afterpulse_time(reactivate, spd, rng);
            if (tap < duration_s) pending.push(tap);
        }
    };
    while (i < candidates.size() || !pending.empty()) {
        if (!pending.empty() && (i >= candidates.size() || pending.top() < candidates[i])) {
            const double t = pending.top();
            pending.pop();
            record(t, false);
        } else {
            record(candidates[i], true);
            ++i;
        }
    }
    return clicks;
}

// Nominal arrival time of (output bin, port) of a given pulse: pulse start
// plus bin offset plus the per-port multiplex delay. Returned time is the
// bin center.
inline double time_multiplex(int bin, int port, std::int64_t pulse,
                             const MultiplexConfig& mux, const SourceConfig& source) {
    return static_cast<double>(pulse) * source.period_s() +
           static_cast<double>(bin) * source.bin_width_s +
           (port == 1 ? mux.port_delay_s : 0.0);
}

struct DemuxResult {
    bool assigned = false;
    std::int64_t pulse = -1;
    int bin = -1;
    int port = -1;
};

// Inverse of time_multiplex by windowed binning: timestamps are assigned to
// the nearest bin center of either port image; exact midpoints break toward
// the earlier bin; anything outside the windows is reported unassigned.
inline DemuxResult demultiplex(double t, const MultiplexConfig& mux, const SourceConfig& source) {
    if (t < 0.0) return {};
    const double period = source.period_s();
    const double dt = source.bin_width_s;
    const int n = source.n_bins;
    const auto pulse = static_cast<std::int64_t>(std::floor(t / period));
    const double rel = t - static_cast<double>(pulse) * period;

    for (int port = 0; port < 2; ++port) {
        const double lo = (port == 1 ? mux.port_delay_s : 0.0);
        const double x = (rel - lo) / dt;
        if (x >= 0.5 && x < static_cast<double>(n) + 1.5) {
            // nearest integer, ties toward the earlier bin
            int bin = static_cast<int>(std::ceil(x - 0.5));
            bin = std::clamp(bin, 1, n + 1);
            return {true, pulse, bin, port};
        }
    }
    return {false, pulse, -1, -1};
}

} // namespace dpsqkd
