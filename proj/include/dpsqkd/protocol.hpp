#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "dpsqkd/attacks.hpp"
#include "dpsqkd/common.hpp"
#include "dpsqkd/devices.hpp"
#include "dpsqkd/rng.hpp"
#include "dpsqkd/states.hpp"

namespace dpsqkd {

// Guard window of total width g straddling every bin boundary; timestamps
// within g/2 of a boundary on either side are discarded.
struct GuardBandPolicy {
    double guard_time_s = 0.0;

    void validate(double bin_width_s) const {
        if (guard_time_s < 0.0 || guard_time_s > bin_width_s)
            throw ConfigError("guard time must lie in [0, bin_width]");
    }
};

struct AttackDescriptor {
    enum class Kind { none, intercept_resend, beam_splitter };
    Kind kind = Kind::none;
    IrAttackConfig ir{};
    BsAttackConfig bs{};
};

// Packed per-pulse key bits, (N-1) bits per pulse.
class KeyBitStore {
public:
    KeyBitStore() = default;
    KeyBitStore(std::int64_t pulses, int bits_per_pulse)
        : pulses_(pulses), bits_per_pulse_(bits_per_pulse),
          words_(static_cast<std::size_t>((pulses * bits_per_pulse + 63) / 64), 0) {}

    void set(std::int64_t pulse, int bit_index, bool value) {
        const auto i = static_cast<std::uint64_t>(pulse) * bits_per_pulse_ + bit_index;
        if (value) words_[i >> 6] |= (1ULL << (i & 63));
        else words_[i >> 6] &= ~(1ULL << (i & 63));
    }

    std::uint8_t get(std::int64_t pulse, int bit_index) const {
        const auto i = static_cast<std::uint64_t>(pulse) * bits_per_pulse_ + bit_index;
        return static_cast<std::uint8_t>((words_[i >> 6] >> (i & 63)) & 1ULL);
    }

    std::int64_t pulses() const { return pulses_; }
    int bits_per_pulse() const { return bits_per_pulse_; }

private:
    std::int64_t pulses_ = 0;
    std::uint64_t bits_per_pulse_ = 0;
    std::vector<std::uint64_t> words_;
};

struct SessionConfig {
    SourceConfig source{};
    ChannelConfig channel{};
    double dli_visibility = 0.92;
    SpdConfig spd{};
    MultiplexConfig multiplex{};
    std::int64_t n_pulses = 1'000'000;
    std::uint64_t seed = 42;
    AttackDescriptor attack{};
    // When set, every pulse carries this differential pattern instead of a
    // random one (fixed-pattern characterization runs).
    std::optional<std::vector<std::uint8_t>> fixed_pattern_bits;

    void validate() const {
        multiplex.validate();
        source.validate(multiplex);
        channel.validate();
        spd.validate();
        if (dli_visibility < 0.0 || dli_visibility > 1.0)
            throw ConfigError("dli visibility must lie in [0, 1]");
        if (n_pulses < 1) throw ConfigError("need at least one pulse");
        if (std::abs(spd.gate_period_s - source.period_s()) > 1e-15)
            throw ConfigError("spd gate period must equal the source pulse period");
        if (attack.kind == AttackDescriptor::Kind::intercept_resend) attack.ir.validate();
        if (attack.kind == AttackDescriptor::Kind::beam_splitter) attack.bs.validate();
        if (fixed_pattern_bits) {
            if (static_cast<int>(fixed_pattern_bits->size()) != source.n_bins - 1)
                throw ConfigError("fixed pattern must have N-1 difference bits");
            for (auto b : *fixed_pattern_bits)
                if (b > 1) throw ConfigError("fixed pattern bits must be 0 or 1");
        }
    }
};

struct DiscardLog {
    std::int64_t unassigned = 0;
    std::int64_t edge = 0;
    std::int64_t guard = 0;
};

struct SessionRecord {
    SessionConfig config;
    KeyBitStore alice_bits;
    std::vector<TimestampRecord> timestamps; // sorted by time
    DiscardLog discards;                     // unassigned filled at demux, guard by temporal_filter
    double duration_s = 0.0;

    std::uint8_t alice_bit(std::int64_t pulse, int difference_index) const {
        return alice_bits.get(pulse, difference_index - 1);
    }

    PhasePattern pattern_of(std::int64_t pulse) const {
        std::vector<std::uint8_t> bits(static_cast<std::size_t>(alice_bits.bits_per_pulse()));
        for (std::size_t i = 0; i < bits.size(); ++i)
            bits[i] = alice_bits.get(pulse, static_cast<int>(i));
        return PhasePattern::from_difference_bits(bits);
    }
};

namespace detail {

// Effective state for a photon caught mid phase-transition: the phase of bin
// j interpolates linearly from the previous bin's value toward its own.
inline TimeBinState transition_state(const PhasePattern& pattern, double ramp_fraction, double bin_width_s) {
    const std::size_t n = pattern.size();
    TimeBinState state;
    state.bin_width_s = bin_width_s;
    state.amplitudes.resize(n);
    const double amp = 1.0 / std::sqrt(static_cast<double>(n));
    state.amplitudes[0] = std::polar(amp, pattern.phase(0));
    for (std::size_t j = 1; j < n; ++j) {
        const double phi = pattern.phase(j - 1) + (pattern.phase(j) - pattern.phase(j - 1)) * ramp_fraction;
        state.amplitudes[j] = std::polar(amp, phi);
    }
    return state;
}

} // namespace detail

// Full session: Alice draws random patterns, photons traverse channel, DLI,
// multiplexer and detector; clicks come back as a demultiplexed timestamp
// stream. Deterministic for a given seed: every subsystem draws from its own
// per-pulse stream, so e.g. enabling the attack leaves the dark-count draws
// untouched.
inline SessionRecord run_session(const SessionConfig& cfg) {
    cfg.validate();

    const int n = cfg.source.n_bins;
    const double dt = cfg.source.bin_width_s;
    const double period = cfg.source.period_s();
    const double duration = static_cast<double>(cfg.n_pulses) * period;

    ChannelConfig channel = cfg.channel;
    double eve_info_rate = 0.0;
    if (cfg.attack.kind == AttackDescriptor::Kind::beam_splitter) {
        const auto out = bs_attack_apply(channel, cfg.attack.bs, cfg.source.mean_photon_number,
                                         cfg.source.rep_rate_hz);
        channel = out.channel;
        eve_info_rate = out.eve_info_rate;
    }
    (void)eve_info_rate;

    const double t_chan = transmittance(channel);
    const double coupler_t = db_to_linear(cfg.multiplex.coupler_loss_db);
    const double spatial_t = (cfg.source.scheme == SourceScheme::spatial_path)
                                 ? 1.0 / static_cast<double>(n)
                                 : 1.0;
    const double survival = t_chan * coupler_t * spatial_t;

    // Leakage through the intensity modulator during the off time between
    // pulses, relative to the in-pulse intensity, folded with the same path
    // losses as the signal. Detector efficiency applies later in spd_detect.
    const double off_time = period - n * dt;
    const double leak_mean = cfg.source.mean_photon_number *
                             db_to_linear(cfg.source.extinction_ratio_db) *
                             (off_time / (n * dt)) * survival;

    const bool ir_active = cfg.attack.kind == AttackDescriptor::Kind::intercept_resend;
    const double t_rf = cfg.source.rise_fall_time_s;

    const std::uint64_t pattern_seed = derive_seed(cfg.seed, "pattern");
    const std::uint64_t source_seed = derive_seed(cfg.seed, "source");
    const std::uint64_t channel_seed = derive_seed(cfg.seed, "channel");
    const std::uint64_t detector_seed = derive_seed(cfg.seed, "detector");
    const std::uint64_t attack_seed = derive_seed(cfg.seed, "attack");

    SessionRecord record;
    record.config = cfg;
    record.duration_s = duration;
    record.alice_bits = KeyBitStore(cfg.n_pulses, n - 1);

    {
        RandomStream pattern_rng(pattern_seed);
        for (std::int64_t p = 0; p < cfg.n_pulses; ++p)
            for (int i = 0; i < n - 1; ++i) {
                const bool bit = cfg.fixed_pattern_bits ? ((*cfg.fixed_pattern_bits)[i] != 0)
                                                        : pattern_rng.bernoulli(0.5);
                record.alice_bits.set(p, i, bit);
            }
    }

    std::vector<Arrival> arrivals;
    arrivals.reserve(static_cast<std::size_t>(
        std::min<double>(static_cast<double>(cfg.n_pulses) *
                             (cfg.source.mean_photon_number * survival + leak_mean) * 1.5 + 1024,
                         5e8)));

    std::vector<std::uint8_t> bits(static_cast<std::size_t>(n - 1));
    for (std::int64_t p = 0; p < cfg.n_pulses; ++p) {
        RandomStream src(derive_seed(source_seed, static_cast<std::uint64_t>(p)));
        int k = photon_count(cfg.source.mean_photon_number, src);

        const int n_leak = leak_mean > 0.0 ? src.poisson(leak_mean) : 0;
        for (int j = 0; j < n_leak; ++j)
            arrivals.push_back({static_cast<double>(p) * period + src.uniform() * period, p});

        if (k == 0 && !ir_active) continue;

        bool intercepted = false;
        std::optional<RandomStream> att;
        if (ir_active) {
            att.emplace(derive_seed(attack_seed, static_cast<std::uint64_t>(p)));
            intercepted = att->bernoulli(cfg.attack.ir.intercept_fraction) && k >= 1;
        }
        if (k == 0) continue;

        for (int i = 0; i < n - 1; ++i) bits[i] = record.alice_bits.get(p, i);
        const PhasePattern pattern = PhasePattern::from_difference_bits(bits);

        RandomStream chan(derive_seed(channel_seed, static_cast<std::uint64_t>(p)));

        std::optional<PhasePattern> resent_pattern;
        if (intercepted) {
            // Eve measures in line with an ideal interferometer and resends a
            // single fresh photon per nonempty pulse.
            const auto outcome = ir_intercept(make_superposition(n, pattern, dt), *att);
            resent_pattern.emplace(PhasePattern::from_difference_bits(outcome.resent_bits));
            k = 1;
        }

        for (int j = 0; j < k; ++j) {
            if (!chan.bernoulli(survival)) continue;
            const double u = src.uniform() * dt; // sub-bin position within the wave packet
            TimeBinState state;
            if (resent_pattern) {
                state = make_superposition(n, *resent_pattern, dt);
            } else if (t_rf > 0.0 && u < t_rf) {
                state = detail::transition_state(pattern, u / t_rf, dt);
            } else {
                state = make_superposition(n, pattern, dt);
            }
            const auto [bin, port] = sample_detection(dli_transform(state, cfg.dli_visibility), chan);
            const double t = time_multiplex(bin, port, p, cfg.multiplex, cfg.source) + (u - dt / 2.0);
            arrivals.push_back({t, p});
        }
    }

    std::sort(arrivals.begin(), arrivals.end(),
              [](const Arrival& a, const Arrival& b) { return a.time_s < b.time_s; });

    RandomStream det(detector_seed);
    record.timestamps = spd_detect(arrivals, cfg.spd, duration, det);

    for (auto& ts : record.timestamps) {
        const auto d = demultiplex(ts.time_s, cfg.multiplex, cfg.source);
        if (d.assigned) {
            ts.pulse = d.pulse;
            ts.bin = d.bin;
            ts.port = d.port;
        } else {
            ++record.discards.unassigned;
        }
    }
    return record;
}

struct SiftedPair {
    std::int64_t pulse;
    int difference_index; // 1..N-1
    std::uint8_t bob_bit;
    std::uint8_t alice_bit;
};

struct SiftedKey {
    std::vector<SiftedPair> pairs;

    std::int64_t mismatches() const {
        std::int64_t m = 0;
        for (const auto& p : pairs) m += (p.bob_bit != p.alice_bit);
        return m;
    }

    double mismatch_fraction() const {
        if (pairs.empty()) throw EmptyResultError("sifted key is empty; QBER undefined");
        return static_cast<double>(mismatches()) / static_cast<double>(pairs.size());
    }
};

struct SiftResult {
    SiftedKey key;
    std::int64_t edge_discards = 0;
    std::int64_t unassigned_discards = 0;
    std::int64_t multi_click_pulses = 0;
};

// Keep interference-bin clicks only: bin k in 2..N decodes difference k-1
// with bob_bit = port; edge bins and unassigned clicks are dropped (and
// counted). Every click yields at most one bit.
inline SiftResult sift(const SessionRecord& record) {
    const int n = record.config.source.n_bins;
    SiftResult res;
    res.key.pairs.reserve(record.timestamps.size());
    for (const auto& ts : record.timestamps) {
        if (ts.bin < 0) {
            ++res.unassigned_discards;
        } else if (ts.bin == 1 || ts.bin == n + 1) {
            ++res.edge_discards;
        } else {
            const int d = ts.bin - 1;
            res.key.pairs.push_back(SiftedPair{ts.pulse, d,
                                               static_cast<std::uint8_t>(ts.port),
                                               record.alice_bit(ts.pulse, d)});
        }
    }
    std::vector<std::int64_t> pulses;
    pulses.reserve(res.key.pairs.size());
    for (const auto& p : res.key.pairs) pulses.push_back(p.pulse);
    std::sort(pulses.begin(), pulses.end());
    for (std::size_t i = 1; i < pulses.size(); ++i)
        if (pulses[i] == pulses[i - 1] && (i < 2 || pulses[i] != pulses[i - 2]))
            ++res.multi_click_pulses;
    return res;
}

// Offset of a timestamp from its assigned bin center.
inline double bin_center_offset(const TimestampRecord& ts, const MultiplexConfig& mux,
                                const SourceConfig& source) {
    return ts.time_s - time_multiplex(ts.bin, ts.port, ts.pulse, mux, source);
}

// Remove assigned timestamps whose offset from the bin center exceeds
// (bin_width - g)/2, i.e. anything within g/2 of a bin boundary. Returns the
// survivors and the exact discarded fraction of the input stream.
inline std::pair<std::vector<TimestampRecord>, double>
temporal_filter(const std::vector<TimestampRecord>& timestamps, const GuardBandPolicy& policy,
                const SourceConfig& source, const MultiplexConfig& mux) {
    policy.validate(source.bin_width_s);
    const double keep_half_width = (source.bin_width_s - policy.guard_time_s) / 2.0;
    std::vector<TimestampRecord> kept;
    kept.reserve(timestamps.size());
    for (const auto& ts : timestamps) {
        if (ts.bin >= 0 && std::abs(bin_center_offset(ts, mux, source)) > keep_half_width) continue;
        kept.push_back(ts);
    }
    const double discarded = timestamps.empty()
                                 ? 0.0
                                 : static_cast<double>(timestamps.size() - kept.size()) /
                                       static_cast<double>(timestamps.size());
    return {std::move(kept), discarded};
}

struct GuardFiltered {
    SessionRecord record;
    double discard_fraction = 0.0;
    std::int64_t discarded = 0;
};

inline GuardFiltered with_guard(const SessionRecord& record, const GuardBandPolicy& policy) {
    GuardFiltered out;
    auto [kept, fraction] = temporal_filter(record.timestamps, policy, record.config.source,
                                            record.config.multiplex);
    out.discarded = static_cast<std::int64_t>(record.timestamps.size() - kept.size());
    out.discard_fraction = fraction;
    out.record = record;
    out.record.timestamps = std::move(kept);
    out.record.discards.guard += out.discarded;
    return out;
}

// Photon-count classification by decode window, for fixed-pattern runs.
// counts[port][q] accumulates clicks falling in the window of difference i
// at the given port, where q is the transmitted bit of difference i. The
// window of difference i at port p is [T_p + (i-1) dT, T_p + i dT), with
// timestamps folded into one pulse period.
struct CountMatrix {
    std::int64_t counts[2][2] = {{0, 0}, {0, 0}};

    std::int64_t total() const { return counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1]; }
    std::int64_t errors() const { return counts[0][1] + counts[1][0]; }
};

inline CountMatrix classify_counts(const std::vector<TimestampRecord>& timestamps,
                                   const std::vector<std::uint8_t>& pattern_bits,
                                   double t0, double t1, double bin_width_s, double period_s) {
    const int n_diff = static_cast<int>(pattern_bits.size());
    if (n_diff < 1) throw ConfigError("classify_counts: pattern needs at least one difference");
    if (t1 < t0 + n_diff * bin_width_s)
        throw ConfigError("classify_counts: port windows overlap (T1 < T0 + (N-1) x bin width)");
    CountMatrix m;
    for (const auto& ts : timestamps) {
        const double rel = ts.time_s - std::floor(ts.time_s / period_s) * period_s;
        for (int port = 0; port < 2; ++port) {
            const double origin = port == 0 ? t0 : t1;
            const double x = (rel - origin) / bin_width_s;
            if (x >= 0.0 && x < static_cast<double>(n_diff)) {
                const int d = static_cast<int>(x); // difference index - 1
                ++m.counts[port][pattern_bits[static_cast<std::size_t>(d)]];
                break;
            }
        }
    }
    return m;
}

// Start of the key windows (difference 1) for a port: the windowed image of
// output bin 2.
inline double key_window_origin(const SourceConfig& source, const MultiplexConfig& mux, int port) {
    return 1.5 * source.bin_width_s + (port == 1 ? mux.port_delay_s : 0.0);
}

// QBER = (C01 + C10) / (C00 + C01 + C10 + C11)
inline double qber(std::int64_t c00, std::int64_t c01, std::int64_t c10, std::int64_t c11) {
    const std::int64_t total = c00 + c01 + c10 + c11;
    if (total <= 0) throw EmptyResultError("qber undefined for zero total counts");
    return static_cast<double>(c01 + c10) / static_cast<double>(total);
}

inline double qber(const CountMatrix& m) {
    return qber(m.counts[0][0], m.counts[0][1], m.counts[1][0], m.counts[1][1]);
}

} // namespace dpsqkd
