// Command-line front end: simulate sessions, sweep parameters, tabulate
// intercept-resend attack error rates and print the error budget.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dpsqkd/analytics.hpp"
#include "dpsqkd/attacks.hpp"
#include "dpsqkd/common.hpp"
#include "dpsqkd/config.hpp"
#include "dpsqkd/protocol.hpp"
#include "dpsqkd/records_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

json config_json(const dpsqkd::SessionConfig& cfg, const dpsqkd::GuardBandPolicy& guard) {
    json j;
    j["source"] = {
        {"scheme", cfg.source.scheme == dpsqkd::SourceScheme::time_bin ? "time-bin" : "spatial-path"},
        {"rep_rate_hz", cfg.source.rep_rate_hz},
        {"mean_photon_number", cfg.source.mean_photon_number},
        {"n_bins", cfg.source.n_bins},
        {"bin_width_s", cfg.source.bin_width_s},
        {"extinction_ratio_db", cfg.source.extinction_ratio_db},
        {"rise_fall_time_s", cfg.source.rise_fall_time_s},
    };
    j["channel"] = {
        {"length_km", cfg.channel.length_km},
        {"attenuation_db_per_km", cfg.channel.attenuation_db_per_km},
        {"insertion_loss_db", cfg.channel.insertion_loss_db},
    };
    j["dli"] = {{"visibility", cfg.dli_visibility}};
    j["spd"] = {
        {"efficiency", cfg.spd.efficiency},
        {"dark_count_rate_hz", cfg.spd.dark_count_rate_hz},
        {"afterpulse_probability", cfg.spd.afterpulse_prob},
        {"hold_off_s", cfg.spd.hold_off_s},
        {"jitter_sigma_s", cfg.spd.jitter_sigma_s},
        {"gate_width_s", cfg.spd.gate_width_s},
        {"gate_delay_s", cfg.spd.gate_delay_s},
    };
    j["multiplex"] = {
        {"port_delay_s", cfg.multiplex.port_delay_s},
        {"coupler_loss_db", cfg.multiplex.coupler_loss_db},
    };
    j["run"] = {
        {"pulses", cfg.n_pulses},
        {"seed", cfg.seed},
        {"guard_time_s", guard.guard_time_s},
    };
    const char* attack = "none";
    if (cfg.attack.kind == dpsqkd::AttackDescriptor::Kind::intercept_resend) attack = "intercept-resend";
    if (cfg.attack.kind == dpsqkd::AttackDescriptor::Kind::beam_splitter) attack = "beam-splitter";
    j["attack"] = {
        {"type", attack},
        {"intercept_fraction", cfg.attack.ir.intercept_fraction},
        {"resend_mean_photon", cfg.attack.ir.resend_mean_photon},
        {"tap_ratio", cfg.attack.bs.tap_ratio},
    };
    if (cfg.fixed_pattern_bits) j["run"]["fixed_pattern"] = *cfg.fixed_pattern_bits;
    return j;
}

void write_manifest(const fs::path& dir, const std::string& subcommand, json extra) {
    json j;
    j["tool"] = "dps-qkd";
    j["version"] = dpsqkd::kVersion;
    j["subcommand"] = subcommand;
    j.update(extra);
    std::ofstream out(dir / "manifest.json");
    out << j.dump(2) << '\n';
}

void write_manifest(const fs::path& dir, const std::string& subcommand,
                    const std::string& config_path, const dpsqkd::SessionConfig& cfg,
                    const dpsqkd::GuardBandPolicy& guard) {
    write_manifest(dir, subcommand,
                   json{{"config_path", config_path},
                        {"seed", cfg.seed},
                        {"pulses", cfg.n_pulses},
                        {"resolved_config", config_json(cfg, guard)}});
}

struct CommonOverrides {
    std::string config_path;
    std::string out_dir;
    std::int64_t pulses = 0;
    std::int64_t seed = -1;

    void apply(dpsqkd::SessionConfig& cfg) const {
        if (pulses > 0) cfg.n_pulses = pulses;
        if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    }
};

int cmd_simulate(const CommonOverrides& opts) {
    auto loaded = dpsqkd::load_session_config_file(opts.config_path);
    opts.apply(loaded.session);

    const auto record = dpsqkd::run_session(loaded.session);
    const auto guarded = dpsqkd::with_guard(record, loaded.guard);
    const auto sifted = dpsqkd::sift(guarded.record);

    const fs::path dir(opts.out_dir.empty() ? "." : opts.out_dir);
    fs::create_directories(dir);

    {
        std::ofstream out(dir / "records.csv");
        dpsqkd::export_records(out, dpsqkd::session_rows(record, loaded.guard));
    }
    {
        std::ofstream out(dir / "sifted_key.csv");
        out << "pulse,difference_index,alice_bit,bob_bit\n";
        for (const auto& p : sifted.key.pairs)
            out << p.pulse << ',' << p.difference_index << ',' << int(p.alice_bit) << ','
                << int(p.bob_bit) << '\n';
    }

    json summary;
    summary["pulses"] = loaded.session.n_pulses;
    summary["duration_s"] = record.duration_s;
    summary["clicks"] = record.timestamps.size();
    summary["sifted_bits"] = sifted.key.pairs.size();
    summary["sifted_rate_bps"] =
        static_cast<double>(sifted.key.pairs.size()) / record.duration_s;
    summary["discards"] = {
        {"unassigned", sifted.unassigned_discards},
        {"edge", sifted.edge_discards},
        {"guard", guarded.discarded},
    };
    summary["guard_time_s"] = loaded.guard.guard_time_s;
    summary["guard_discard_fraction"] = guarded.discard_fraction;
    summary["multi_click_pulses"] = sifted.multi_click_pulses;
    if (loaded.session.attack.kind == dpsqkd::AttackDescriptor::Kind::beam_splitter) {
        const auto bs = dpsqkd::bs_attack_apply(loaded.session.channel, loaded.session.attack.bs,
                                                loaded.session.source.mean_photon_number,
                                                loaded.session.source.rep_rate_hz);
        summary["eve_info_rate"] = bs.eve_info_rate;
    }
    const bool empty = sifted.key.pairs.empty();
    const double qber_value = empty ? 0.0 : sifted.key.mismatch_fraction();
    if (!empty) summary["qber"] = qber_value;
    else summary["qber"] = nullptr;

    {
        std::ofstream out(dir / "summary.json");
        out << summary.dump(2) << '\n';
    }
    write_manifest(dir, "simulate", opts.config_path, loaded.session, loaded.guard);

    if (empty) throw dpsqkd::EmptyResultError("session produced zero sifted bits");
    std::cout << "sifted_bits=" << sifted.key.pairs.size() << " qber=" << fmt(qber_value)
              << " sifted_rate_bps="
              << fmt(static_cast<double>(sifted.key.pairs.size()) / record.duration_s) << '\n';
    return 0;
}

dpsqkd::SweepAxis axis_from_name(const std::string& name) {
    if (name == "distance") return dpsqkd::SweepAxis::distance;
    if (name == "guard_time") return dpsqkd::SweepAxis::guard_time;
    if (name == "n_bins") return dpsqkd::SweepAxis::n_bins;
    if (name == "mu") return dpsqkd::SweepAxis::mu;
    if (name == "gate_delay") return dpsqkd::SweepAxis::gate_delay;
    throw dpsqkd::ConfigError("unknown sweep axis '" + name +
                              "' (expected distance, guard_time, n_bins, mu, gate_delay)");
}

// Grid token in the axis quantity; a bare number is read in the axis's
// canonical unit (km, ps, bins, photons/pulse, ns).
double parse_axis_value(dpsqkd::SweepAxis axis, const std::string& token) {
    const auto q = dpsqkd::detail::split_quantity(token, "sweep range");
    switch (axis) {
    case dpsqkd::SweepAxis::distance:
        if (q.unit.empty()) return q.value;
        return dpsqkd::parse_length_km(token, "sweep range");
    case dpsqkd::SweepAxis::guard_time:
        if (q.unit.empty()) return q.value * 1e-12;
        return dpsqkd::parse_time_s(token, "sweep range");
    case dpsqkd::SweepAxis::gate_delay:
        if (q.unit.empty()) return q.value * 1e-9;
        return dpsqkd::parse_time_s(token, "sweep range");
    case dpsqkd::SweepAxis::n_bins:
    case dpsqkd::SweepAxis::mu:
        if (!q.unit.empty())
            throw dpsqkd::ConfigError("sweep range: unexpected unit '" + q.unit + "'");
        return q.value;
    }
    throw dpsqkd::ConfigError("sweep range: bad axis");
}

std::vector<double> parse_grid(dpsqkd::SweepAxis axis, const std::string& range) {
    std::vector<std::string> parts;
    std::stringstream ss(range);
    std::string tok;
    while (std::getline(ss, tok, ':')) parts.push_back(tok);
    if (parts.size() != 3)
        throw dpsqkd::ConfigError("sweep range must be start:stop:step, got '" + range + "'");
    const double start = parse_axis_value(axis, parts[0]);
    const double stop = parse_axis_value(axis, parts[1]);
    const double step = parse_axis_value(axis, parts[2]);
    if (step <= 0.0 || stop < start)
        throw dpsqkd::ConfigError("sweep range must satisfy stop >= start and step > 0");
    std::vector<double> grid;
    const auto count = static_cast<long>(std::floor((stop - start) / step + 1e-9)) + 1;
    for (long i = 0; i < count; ++i) grid.push_back(start + static_cast<double>(i) * step);
    return grid;
}

const char* axis_column(dpsqkd::SweepAxis axis) {
    switch (axis) {
    case dpsqkd::SweepAxis::distance: return "distance_km";
    case dpsqkd::SweepAxis::guard_time: return "guard_ps";
    case dpsqkd::SweepAxis::n_bins: return "n_bins";
    case dpsqkd::SweepAxis::mu: return "mu";
    case dpsqkd::SweepAxis::gate_delay: return "gate_delay_ns";
    }
    return "x";
}

double axis_display(dpsqkd::SweepAxis axis, double x) {
    if (axis == dpsqkd::SweepAxis::guard_time) return x * 1e12;
    if (axis == dpsqkd::SweepAxis::gate_delay) return x * 1e9;
    return x;
}

int cmd_sweep(const CommonOverrides& opts, const std::string& axis_name, const std::string& range,
              bool monte_carlo) {
    auto loaded = dpsqkd::load_session_config_file(opts.config_path);
    opts.apply(loaded.session);

    const auto axis = axis_from_name(axis_name);
    const auto grid = parse_grid(axis, range);

    dpsqkd::SweepOptions sweep_opts;
    sweep_opts.monte_carlo = monte_carlo;
    sweep_opts.mc_pulses = opts.pulses;
    const auto rows = dpsqkd::sweep(axis, grid, loaded.session, loaded.guard, sweep_opts);

    std::ostringstream csv;
    csv << axis_column(axis) << ",sifted_rate_bps,qber,secure_rate_bps,sift_fraction,discard_fraction";
    if (monte_carlo) csv << ",mc_sifted_rate_bps,mc_qber,mc_secure_rate_bps,mc_discard_fraction";
    csv << '\n';
    for (const auto& r : rows) {
        csv << fmt(axis_display(axis, r.x)) << ',' << fmt(r.sifted_rate_bps) << ',' << fmt(r.qber)
            << ',' << fmt(r.secure_rate_bps) << ',' << fmt(r.sift_fraction) << ','
            << fmt(r.discard_fraction);
        if (monte_carlo)
            csv << ',' << fmt(r.mc_sifted_rate_bps) << ',' << fmt(r.mc_qber) << ','
                << fmt(r.mc_secure_rate_bps) << ',' << fmt(r.mc_discard_fraction);
        csv << '\n';
    }

    if (!opts.out_dir.empty()) {
        const fs::path dir(opts.out_dir);
        fs::create_directories(dir);
        std::ofstream out(dir / "sweep.csv");
        out << csv.str();
        write_manifest(dir, "sweep", opts.config_path, loaded.session, loaded.guard);
    }
    std::cout << csv.str();
    return 0;
}

int cmd_attack_report(const CommonOverrides& opts, const std::string& bins_arg) {
    std::vector<int> bins;
    {
        std::stringstream ss(bins_arg);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            tok = dpsqkd::detail::trim(tok);
            if (tok.empty()) continue;
            const auto v = dpsqkd::parse_int(tok, "attack-report bins");
            if (v < 2) throw dpsqkd::ConfigError("attack-report: n_bins must be >= 2");
            bins.push_back(static_cast<int>(v));
        }
    }
    if (bins.empty()) throw dpsqkd::ConfigError("attack-report: empty n_bins set");

    std::uint64_t seed = 42;
    if (!opts.config_path.empty())
        seed = dpsqkd::load_session_config_file(opts.config_path).session.seed;
    if (opts.seed >= 0) seed = static_cast<std::uint64_t>(opts.seed);
    const std::int64_t pulses = opts.pulses > 0 ? opts.pulses : 250'000;

    std::ostringstream csv;
    csv << "n_bins,qber_exact,qber_mc,mc_std_error,sifted_bits\n";
    for (const int n : bins) {
        // Idealized devices isolate the attack-induced error rate.
        dpsqkd::SessionConfig cfg;
        cfg.source.rep_rate_hz = 10e6;
        cfg.source.n_bins = n;
        cfg.source.bin_width_s = 1e-9;
        cfg.source.mean_photon_number = 3.0;
        cfg.source.extinction_ratio_db = 1000.0;
        cfg.source.rise_fall_time_s = 0.0;
        cfg.multiplex.port_delay_s = (n + 2) * cfg.source.bin_width_s;
        cfg.channel = {0.0, 0.0, 0.0};
        cfg.multiplex.coupler_loss_db = 0.0;
        cfg.dli_visibility = 1.0;
        cfg.spd.efficiency = 1.0;
        cfg.spd.dark_count_rate_hz = 0.0;
        cfg.spd.afterpulse_prob = 0.0;
        cfg.spd.hold_off_s = 0.0;
        cfg.spd.jitter_sigma_s = 0.0;
        cfg.spd.gate_width_s = cfg.source.period_s();
        cfg.spd.gate_period_s = cfg.source.period_s();
        cfg.attack.kind = dpsqkd::AttackDescriptor::Kind::intercept_resend;
        cfg.attack.ir.intercept_fraction = 1.0;
        cfg.n_pulses = pulses;
        cfg.seed = dpsqkd::derive_seed(seed, static_cast<std::uint64_t>(n));

        const auto record = dpsqkd::run_session(cfg);
        const auto sifted = dpsqkd::sift(record);
        if (sifted.key.pairs.empty())
            throw dpsqkd::EmptyResultError("attack-report produced zero sifted bits");
        const double q = sifted.key.mismatch_fraction();
        const auto bits = static_cast<double>(sifted.key.pairs.size());
        const double stderr_mc = std::sqrt(q * (1.0 - q) / bits);
        csv << n << ',' << fmt(dpsqkd::ir_qber_exact(n)) << ',' << fmt(q) << ',' << fmt(stderr_mc)
            << ',' << sifted.key.pairs.size() << '\n';
    }

    if (!opts.out_dir.empty()) {
        const fs::path dir(opts.out_dir);
        fs::create_directories(dir);
        std::ofstream out(dir / "attack_report.csv");
        out << csv.str();
        write_manifest(dir, "attack-report",
                       json{{"config_path", opts.config_path},
                            {"seed", seed},
                            {"pulses", pulses},
                            {"bins", bins}});
    }
    std::cout << csv.str();
    return 0;
}

int cmd_budget(const std::string& out_dir) {
    const auto b1 = dpsqkd::reference_error_budget(1e-9);
    const auto b04 = dpsqkd::reference_error_budget(0.4e-9);
    std::ostringstream csv;
    csv << "source,qber_1ns,qber_0p4ns\n";
    for (std::size_t i = 0; i < b1.entries.size(); ++i)
        csv << b1.entries[i].source << ',' << fmt(b1.entries[i].contribution) << ','
            << fmt(b04.entries[i].contribution) << '\n';
    csv << "total," << fmt(dpsqkd::error_budget_total(b1)) << ','
        << fmt(dpsqkd::error_budget_total(b04)) << '\n';
    if (!out_dir.empty()) {
        const fs::path dir(out_dir);
        fs::create_directories(dir);
        std::ofstream out(dir / "budget.csv");
        out << csv.str();
        write_manifest(dir, "budget", json{{"bin_widths_s", {1e-9, 0.4e-9}}});
    }
    std::cout << csv.str();
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"M-state differential-phase-shift QKD simulator"};
    app.require_subcommand(1);

    CommonOverrides opts;

    auto* sim = app.add_subcommand("simulate", "run one session and export records and summary");
    sim->add_option("--config", opts.config_path, "session config file")->required();
    sim->add_option("--out", opts.out_dir, "output directory")->required();
    sim->add_option("--seed", opts.seed, "override the config seed");
    sim->add_option("--pulses", opts.pulses, "override the pulse count");

    auto* swp = app.add_subcommand("sweep", "tabulate rates over a parameter grid");
    std::string axis_name, range;
    bool mc = false, analytic = false;
    swp->add_option("--config", opts.config_path, "session config file")->required();
    swp->add_option("--axis", axis_name, "distance | guard_time | n_bins | mu | gate_delay")->required();
    swp->add_option("--range", range, "start:stop:step (units allowed, e.g. 0:400ps:50ps)")->required();
    swp->add_flag("--mc", mc, "add Monte-Carlo columns");
    swp->add_flag("--analytic", analytic, "analytic columns only (default)");
    swp->add_option("--out", opts.out_dir, "output directory");
    swp->add_option("--seed", opts.seed, "override the config seed");
    swp->add_option("--pulses", opts.pulses, "pulses per Monte-Carlo point");

    auto* att = app.add_subcommand("attack-report",
                                   "exact and simulated intercept-resend QBER per superposition size");
    std::string bins = "2,3,4";
    att->add_option("--config", opts.config_path, "optional config (seed template)");
    att->add_option("--bins", bins, "comma-separated list of N values");
    att->add_option("--out", opts.out_dir, "output directory");
    att->add_option("--seed", opts.seed, "override the seed");
    att->add_option("--pulses", opts.pulses, "pulses per N");

    auto* bud = app.add_subcommand("budget", "print the reference error budget");
    bud->add_option("--out", opts.out_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (sim->parsed()) return cmd_simulate(opts);
        if (swp->parsed()) {
            if (mc && analytic) throw dpsqkd::ConfigError("choose either --mc or --analytic");
            return cmd_sweep(opts, axis_name, range, mc);
        }
        if (att->parsed()) return cmd_attack_report(opts, bins);
        if (bud->parsed()) return cmd_budget(opts.out_dir);
    } catch (const dpsqkd::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const dpsqkd::EmptyResultError& e) {
        std::cerr << "empty result: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
