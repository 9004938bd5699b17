#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dpsqkd/common.hpp"
#include "dpsqkd/protocol.hpp"

namespace dpsqkd {

// Parameter set of the closed-form sifted-rate model.
struct RateModelParams {
    double rep_rate_hz = 62.5e6;
    double mu = 0.17;
    double efficiency = 0.1;
    double attenuation_db_per_km = 0.2;
    double length_km = 30.0;
    double insertion_loss_db = 0.0;
    double hold_off_s = 10e-6;

    double transmittance() const {
        return std::pow(10.0, -(attenuation_db_per_km * length_km + insertion_loss_db) / 10.0);
    }
};

// R_sifted = r_p mu eta T_L exp(-r_p mu eta T_L tau_H)
inline double sifted_rate(const RateModelParams& p) {
    const double x = p.rep_rate_hz * p.mu * p.efficiency * p.transmittance();
    return x * std::exp(-x * p.hold_off_s);
}

// Non-paralyzable dead-time form R/(1 + R tau_H); kept alongside the
// exponential model so the discrepancy between the two can be reported.
inline double sifted_rate_nonparalyzable(const RateModelParams& p) {
    const double x = p.rep_rate_hz * p.mu * p.efficiency * p.transmittance();
    return x / (1.0 + x * p.hold_off_s);
}

// Binary Shannon entropy, base 2, with h(0) = h(1) = 0.
inline double binary_entropy(double e) {
    if (e < 0.0 || e > 1.0) throw std::domain_error("binary_entropy: argument outside [0, 1]");
    if (e == 0.0 || e == 1.0) return 0.0;
    return -e * std::log2(e) - (1.0 - e) * std::log2(1.0 - e);
}

struct SecureRateParams {
    double shrinking_factor = 1.0; // tau: fraction surviving privacy amplification
    double ec_inefficiency = 1.16; // f(e) >= 1

    void validate() const {
        if (shrinking_factor < 0.0 || shrinking_factor > 1.0)
            throw ConfigError("shrinking factor must lie in [0, 1]");
        if (ec_inefficiency < 1.0) throw ConfigError("error-correction inefficiency must be >= 1");
    }
};

// R_sec = R_sifted [tau - f(e) h(e)], clamped at zero.
inline double secure_rate(double r_sifted, double e, const SecureRateParams& sp) {
    sp.validate();
    const double bracket = sp.shrinking_factor - sp.ec_inefficiency * binary_entropy(e);
    return r_sifted * std::max(0.0, bracket);
}

struct ErrorBudgetEntry {
    std::string source;
    double contribution; // QBER fraction
};

struct ErrorBudget {
    std::vector<ErrorBudgetEntry> entries;
};

// Independent-error approximation: contributions add.
inline double error_budget_total(const ErrorBudget& budget) {
    double total = 0.0;
    for (const auto& e : budget.entries) {
        if (e.contribution < 0.0 || e.contribution > 0.5)
            throw ConfigError("error budget entries must lie in [0, 0.5]");
        total += e.contribution;
    }
    return total;
}

// Reference per-source QBER contributions of the test-bed, for the two
// characterized bin widths (1 ns and 0.4 ns).
inline ErrorBudget reference_error_budget(double bin_width_s) {
    const bool ns1 = std::abs(bin_width_s - 1e-9) < 1e-12;
    const bool ns04 = std::abs(bin_width_s - 0.4e-9) < 1e-12;
    if (!ns1 && !ns04) throw ConfigError("no reference error budget for this bin width");
    ErrorBudget b;
    b.entries = {
        {"dark counts", 0.0033},
        {"afterpulse", 0.015},
        {"extinction ratio", 0.016},
        {"timing jitter", ns1 ? 0.050 : 0.125},
        {"dli visibility", ns1 ? 0.040 : 0.020},
        {"modulator rise/fall", ns1 ? 0.021 : 0.0525},
    };
    return b;
}

// Probability mass in the interference bins of a uniform N-bin state; the
// edge bins carry 1/N between them.
inline double m_state_sift_fraction(int n_bins) {
    if (n_bins < 2) throw std::domain_error("m_state_sift_fraction: need at least 2 bins");
    return static_cast<double>(n_bins - 1) / static_cast<double>(n_bins);
}

// Extra splitting loss of the spatial-path source variant.
inline double spatial_splitting_penalty(int n_bins) {
    if (n_bins < 2) throw std::domain_error("spatial_splitting_penalty: need at least 2 bins");
    return 1.0 / static_cast<double>(n_bins);
}

namespace detail {

inline double gaussian_q(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

// Integral of the Gaussian upper-tail function, int_0^z Q(w) dw.
inline double gaussian_q_integral(double z) {
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    if (z >= 0.0)
        return z * gaussian_q(z) + (1.0 - std::exp(-0.5 * z * z)) * inv_sqrt_2pi;
    return z + gaussian_q_integral(-z);
}

// Probability that a detection with uniform sub-bin position plus Gaussian
// jitter is recorded inside [lo, hi] measured from its own bin start.
inline double window_probability(double sigma, double bin_width, double lo, double hi) {
    if (hi <= lo) return 0.0;
    if (sigma <= 0.0) {
        const double a = std::max(0.0, lo);
        const double b = std::min(bin_width, hi);
        return std::max(0.0, b - a) / bin_width;
    }
    // (1/dT) int_0^dT [Q((lo-u)/s) - Q((hi-u)/s)] du
    const double s = sigma;
    auto term = [&](double edge) {
        return s * (gaussian_q_integral(edge / s) - gaussian_q_integral((edge - bin_width) / s));
    };
    return (term(lo) - term(hi)) / bin_width;
}

} // namespace detail

// Jitter-induced QBER of an N-bin session with a guard band: errors come
// from detections sliding into an adjacent interference bin's kept region
// (wrong difference index, random bit agreement). Uniform sub-bin position
// plus Gaussian jitter; jumps of two or more bins are neglected.
inline double jitter_qber_model(double sigma, double bin_width, int n_bins, double guard = 0.0) {
    if (n_bins < 2) throw std::domain_error("jitter_qber_model: need at least 2 bins");
    const double g2 = guard / 2.0;
    const double keep_same = detail::window_probability(sigma, bin_width, g2, bin_width - g2);
    const double cross_kept =
        detail::window_probability(sigma, bin_width, bin_width + g2, 2.0 * bin_width - g2);

    const double n = n_bins;
    const double interference_mass = (n - 1.0) / n;
    const double sifted = interference_mass * keep_same +
                          (2.0 * (n - 2.0) / n) * cross_kept + // interference -> interference
                          (1.0 / n) * cross_kept;              // edges -> interference
    const double errors = 0.5 * ((2.0 * (n - 2.0) / n) + (1.0 / n)) * cross_kept;
    if (sifted <= 0.0) return 0.0;
    return errors / sifted;
}

// Invert the jitter model: the sigma whose guardless QBER equals `target`.
inline double jitter_sigma_for_qber(double target, double bin_width, int n_bins) {
    if (target <= 0.0) return 0.0;
    double lo = 0.0, hi = bin_width;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (jitter_qber_model(mid, bin_width, n_bins) < target) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

// Phase-transition QBER: photons whose sub-bin position falls inside the
// modulator transition see an intermediate phase difference at flipped
// boundaries; averaged over random patterns and a linear ramp this errs with
// probability 1/4, so the guardless contribution is t_rf / (4 dT).
inline double rise_fall_qber_model(double rise_fall_time, double bin_width, double guard = 0.0) {
    const double affected = std::max(0.0, rise_fall_time - guard / 2.0);
    const double kept = bin_width - guard;
    if (kept <= 0.0) return 0.0;
    return 0.25 * affected / kept;
}

inline double rise_fall_time_for_qber(double target, double bin_width) {
    return 4.0 * bin_width * target;
}

// Analytic rate-model parameters of a session, with coupler loss, sift
// fraction and the spatial splitting penalty folded into the insertion loss.
inline RateModelParams analytic_rate_params(const SessionConfig& cfg) {
    RateModelParams p;
    p.rep_rate_hz = cfg.source.rep_rate_hz;
    p.mu = cfg.source.mean_photon_number;
    p.efficiency = cfg.spd.efficiency;
    p.attenuation_db_per_km = cfg.channel.attenuation_db_per_km;
    p.length_km = cfg.channel.length_km;
    p.hold_off_s = cfg.spd.hold_off_s;
    p.insertion_loss_db = cfg.channel.insertion_loss_db + cfg.multiplex.coupler_loss_db -
                          10.0 * std::log10(m_state_sift_fraction(cfg.source.n_bins));
    if (cfg.source.scheme == SourceScheme::spatial_path)
        p.insertion_loss_db -= 10.0 * std::log10(spatial_splitting_penalty(cfg.source.n_bins));
    if (cfg.attack.kind == AttackDescriptor::Kind::beam_splitter && cfg.attack.bs.tap_ratio > 0.0)
        p.insertion_loss_db += -10.0 * std::log10(1.0 - cfg.attack.bs.tap_ratio);
    return p;
}

// Composed QBER estimate for sweep tables. Phase-sensitive mechanisms
// (visibility, jitter, modulator transitions) act on signal bits; uniform
// background (dark counts, leakage, afterpulses) lands in the key windows
// with a random port and errs half the time. Dead time cancels in the ratio.
inline double analytic_qber(const SessionConfig& cfg, double guard = 0.0) {
    const int n = cfg.source.n_bins;
    const double dt = cfg.source.bin_width_s;
    const double period = cfg.source.period_s();

    const double vis = (1.0 - cfg.dli_visibility) / 2.0;
    const double jit = cfg.spd.jitter_sigma_s > 0.0
                           ? jitter_qber_model(cfg.spd.jitter_sigma_s, dt, n, guard)
                           : 0.0;
    const double rf = rise_fall_qber_model(cfg.source.rise_fall_time_s, dt, guard);

    ChannelConfig channel = cfg.channel;
    if (cfg.attack.kind == AttackDescriptor::Kind::beam_splitter)
        channel = bs_attack_apply(channel, cfg.attack.bs, cfg.source.mean_photon_number,
                                  cfg.source.rep_rate_hz).channel;
    double survival = transmittance(channel) * db_to_linear(cfg.multiplex.coupler_loss_db);
    if (cfg.source.scheme == SourceScheme::spatial_path) survival /= n;

    const double sig_clicks = cfg.source.rep_rate_hz *
                              -std::expm1(-cfg.source.mean_photon_number * survival * cfg.spd.efficiency);
    const double keep = (dt - guard) / dt;
    const double sig_sifted = sig_clicks * m_state_sift_fraction(n) * keep;

    const double key_window_s = 2.0 * (n - 1.0) * (dt - guard);
    const double dark_key = cfg.spd.dark_count_rate_hz * key_window_s / period;
    const double off_time = period - n * dt;
    const double leak_rate = cfg.source.rep_rate_hz * cfg.source.mean_photon_number *
                             db_to_linear(cfg.source.extinction_ratio_db) * (off_time / (n * dt)) *
                             survival * cfg.spd.efficiency;
    const double leak_key = leak_rate * key_window_s / period;
    const double gate_s = std::min(cfg.spd.gate_width_s, period);
    const double ap_key = cfg.spd.afterpulse_prob * (sig_clicks + cfg.spd.dark_count_rate_hz + leak_rate) *
                          std::min(1.0, key_window_s / gate_s); // afterpulses land uniformly in a gate
    const double background_key = dark_key + leak_key + ap_key;

    const double total = sig_sifted + background_key;
    if (total <= 0.0) return 0.0;
    return ((vis + jit + rf) * sig_sifted + 0.5 * background_key) / total;
}

enum class SweepAxis { distance, guard_time, n_bins, mu, gate_delay };

struct SweepRow {
    double x = 0.0;
    double sifted_rate_bps = 0.0;
    double qber = 0.0;
    double secure_rate_bps = 0.0;
    double sift_fraction = 0.0;
    double discard_fraction = 0.0;
    bool has_mc = false;
    double mc_sifted_rate_bps = 0.0;
    double mc_qber = 0.0;
    double mc_secure_rate_bps = 0.0;
    double mc_discard_fraction = 0.0;
};

struct SweepOptions {
    bool monte_carlo = false;
    std::int64_t mc_pulses = 0; // 0: use the base config's pulse count
    SecureRateParams secure{};
};

inline std::vector<SweepRow> sweep(SweepAxis axis, const std::vector<double>& grid,
                                   const SessionConfig& base, const GuardBandPolicy& base_guard,
                                   const SweepOptions& opt = {}) {
    if (grid.empty()) throw ConfigError("sweep: empty grid");
    std::vector<SweepRow> rows;
    rows.reserve(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double x = grid[i];
        SessionConfig cfg = base;
        GuardBandPolicy guard = base_guard;
        switch (axis) {
        case SweepAxis::distance: cfg.channel.length_km = x; break;
        case SweepAxis::guard_time: guard.guard_time_s = x; break;
        case SweepAxis::n_bins: cfg.source.n_bins = static_cast<int>(std::lround(x)); break;
        case SweepAxis::mu: cfg.source.mean_photon_number = x; break;
        case SweepAxis::gate_delay: cfg.spd.gate_delay_s = x; break;
        }
        cfg.validate();
        guard.validate(cfg.source.bin_width_s);

        SweepRow row;
        row.x = x;
        const double g = guard.guard_time_s;
        row.sifted_rate_bps = sifted_rate(analytic_rate_params(cfg)) * (1.0 - g / cfg.source.bin_width_s);
        row.qber = analytic_qber(cfg, g);
        row.secure_rate_bps = secure_rate(row.sifted_rate_bps, std::min(row.qber, 1.0), opt.secure);
        row.sift_fraction = m_state_sift_fraction(cfg.source.n_bins);
        row.discard_fraction = g / cfg.source.bin_width_s;

        if (opt.monte_carlo) {
            if (opt.mc_pulses > 0) cfg.n_pulses = opt.mc_pulses;
            cfg.seed = derive_seed(base.seed, static_cast<std::uint64_t>(i));
            const SessionRecord record = run_session(cfg);
            const GuardFiltered filtered = with_guard(record, guard);
            const SiftResult sifted = sift(filtered.record);
            row.has_mc = true;
            row.mc_discard_fraction = filtered.discard_fraction;
            row.mc_sifted_rate_bps =
                static_cast<double>(sifted.key.pairs.size()) / record.duration_s;
            row.mc_qber = sifted.key.pairs.empty() ? std::nan("") : sifted.key.mismatch_fraction();
            row.mc_secure_rate_bps = sifted.key.pairs.empty()
                                         ? 0.0
                                         : secure_rate(row.mc_sifted_rate_bps, row.mc_qber, opt.secure);
        }
        rows.push_back(row);
    }
    return rows;
}

} // namespace dpsqkd
