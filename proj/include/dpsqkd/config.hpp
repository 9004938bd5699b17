#pragma once

#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dpsqkd/common.hpp"
#include "dpsqkd/protocol.hpp"

namespace dpsqkd {

using RawConfig = std::map<std::string, std::map<std::string, std::string>>;

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct Quantity {
    double value;
    std::string unit; // possibly empty
};

inline Quantity split_quantity(const std::string& text, const std::string& field) {
    const std::string t = trim(text);
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (end == t.c_str()) throw ConfigError(field + ": expected a number, got '" + text + "'");
    return {v, trim(std::string(end))};
}

inline double scaled(const Quantity& q, const std::string& field,
                     const std::vector<std::pair<std::string, double>>& units,
                     const std::string& expected) {
    for (const auto& [name, factor] : units)
        if (q.unit == name) return q.value * factor;
    throw ConfigError(field + ": expected " + expected + ", got unit '" + q.unit + "'");
}

} // namespace detail

inline double parse_time_s(const std::string& text, const std::string& field) {
    const auto q = detail::split_quantity(text, field);
    return detail::scaled(q, field,
                          {{"s", 1.0}, {"ms", 1e-3}, {"us", 1e-6}, {"ns", 1e-9}, {"ps", 1e-12}},
                          "a time unit (s, ms, us, ns, ps)");
}

inline double parse_frequency_hz(const std::string& text, const std::string& field) {
    const auto q = detail::split_quantity(text, field);
    return detail::scaled(q, field,
                          {{"Hz", 1.0}, {"kHz", 1e3}, {"MHz", 1e6}, {"GHz", 1e9}, {"/s", 1.0}},
                          "a rate unit (Hz, kHz, MHz, GHz, /s)");
}

inline double parse_length_km(const std::string& text, const std::string& field) {
    const auto q = detail::split_quantity(text, field);
    return detail::scaled(q, field, {{"km", 1.0}, {"m", 1e-3}}, "a length unit (km, m)");
}

inline double parse_db(const std::string& text, const std::string& field) {
    const auto q = detail::split_quantity(text, field);
    return detail::scaled(q, field, {{"dB", 1.0}}, "dB");
}

inline double parse_db_per_km(const std::string& text, const std::string& field) {
    const auto q = detail::split_quantity(text, field);
    return detail::scaled(q, field, {{"dB/km", 1.0}}, "dB/km");
}

inline double parse_pure(const std::string& text, const std::string& field) {
    const auto q = detail::split_quantity(text, field);
    if (!q.unit.empty())
        throw ConfigError(field + ": expected a dimensionless number, got unit '" + q.unit + "'");
    return q.value;
}

inline std::int64_t parse_int(const std::string& text, const std::string& field) {
    const std::string t = detail::trim(text);
    char* end = nullptr;
    const long long v = std::strtoll(t.c_str(), &end, 10);
    if (end == t.c_str() || *end != '\0')
        throw ConfigError(field + ": expected an integer, got '" + text + "'");
    return v;
}

inline RawConfig parse_config_text(std::istream& is, const std::string& origin) {
    RawConfig raw;
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string t = detail::trim(line);
        if (t.empty()) continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section header");
            section = detail::trim(t.substr(1, t.size() - 2));
            raw[section];
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        if (section.empty())
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": key outside any [section]");
        const std::string key = detail::trim(t.substr(0, eq));
        const std::string value = detail::trim(t.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key or value");
        raw[section][key] = value;
    }
    return raw;
}

inline RawConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    return parse_config_text(in, path);
}

struct LoadedConfig {
    SessionConfig session;
    GuardBandPolicy guard;
};

// Build a session from a parsed config. Every key is optional (struct
// defaults apply); unknown sections or keys are rejected.
inline LoadedConfig load_session_config(const RawConfig& raw_in) {
    RawConfig raw = raw_in;
    LoadedConfig out;
    SessionConfig& cfg = out.session;

    auto take = [&](const char* section, const char* key) -> std::optional<std::string> {
        auto sit = raw.find(section);
        if (sit == raw.end()) return std::nullopt;
        auto kit = sit->second.find(key);
        if (kit == sit->second.end()) return std::nullopt;
        std::string v = kit->second;
        sit->second.erase(kit);
        return v;
    };
    auto field = [](const char* section, const char* key) {
        return std::string("[") + section + "] " + key;
    };

    if (auto v = take("source", "scheme")) {
        if (*v == "time-bin") cfg.source.scheme = SourceScheme::time_bin;
        else if (*v == "spatial-path") cfg.source.scheme = SourceScheme::spatial_path;
        else throw ConfigError("[source] scheme: expected time-bin or spatial-path, got '" + *v + "'");
    }
    if (auto v = take("source", "rep_rate"))
        cfg.source.rep_rate_hz = parse_frequency_hz(*v, field("source", "rep_rate"));
    if (auto v = take("source", "mean_photon_number"))
        cfg.source.mean_photon_number = parse_pure(*v, field("source", "mean_photon_number"));
    if (auto v = take("source", "n_bins"))
        cfg.source.n_bins = static_cast<int>(parse_int(*v, field("source", "n_bins")));
    if (auto v = take("source", "bin_width"))
        cfg.source.bin_width_s = parse_time_s(*v, field("source", "bin_width"));
    if (auto v = take("source", "extinction_ratio"))
        cfg.source.extinction_ratio_db = parse_db(*v, field("source", "extinction_ratio"));
    if (auto v = take("source", "rise_fall_time"))
        cfg.source.rise_fall_time_s = parse_time_s(*v, field("source", "rise_fall_time"));

    if (auto v = take("channel", "length"))
        cfg.channel.length_km = parse_length_km(*v, field("channel", "length"));
    if (auto v = take("channel", "attenuation"))
        cfg.channel.attenuation_db_per_km = parse_db_per_km(*v, field("channel", "attenuation"));
    if (auto v = take("channel", "insertion_loss"))
        cfg.channel.insertion_loss_db = parse_db(*v, field("channel", "insertion_loss"));

    if (auto v = take("dli", "visibility"))
        cfg.dli_visibility = parse_pure(*v, field("dli", "visibility"));

    if (auto v = take("spd", "efficiency"))
        cfg.spd.efficiency = parse_pure(*v, field("spd", "efficiency"));
    if (auto v = take("spd", "dark_count_rate"))
        cfg.spd.dark_count_rate_hz = parse_frequency_hz(*v, field("spd", "dark_count_rate"));
    if (auto v = take("spd", "afterpulse_probability"))
        cfg.spd.afterpulse_prob = parse_pure(*v, field("spd", "afterpulse_probability"));
    if (auto v = take("spd", "hold_off"))
        cfg.spd.hold_off_s = parse_time_s(*v, field("spd", "hold_off"));
    if (auto v = take("spd", "jitter_sigma"))
        cfg.spd.jitter_sigma_s = parse_time_s(*v, field("spd", "jitter_sigma"));
    std::optional<double> gate_width;
    if (auto v = take("spd", "gate_width"))
        gate_width = parse_time_s(*v, field("spd", "gate_width"));
    if (auto v = take("spd", "gate_delay"))
        cfg.spd.gate_delay_s = parse_time_s(*v, field("spd", "gate_delay"));

    if (auto v = take("multiplex", "port_delay"))
        cfg.multiplex.port_delay_s = parse_time_s(*v, field("multiplex", "port_delay"));
    if (auto v = take("multiplex", "coupler_loss"))
        cfg.multiplex.coupler_loss_db = parse_db(*v, field("multiplex", "coupler_loss"));

    if (auto v = take("run", "pulses"))
        cfg.n_pulses = parse_int(*v, field("run", "pulses"));
    if (auto v = take("run", "seed"))
        cfg.seed = static_cast<std::uint64_t>(parse_int(*v, field("run", "seed")));
    if (auto v = take("run", "guard_time"))
        out.guard.guard_time_s = parse_time_s(*v, field("run", "guard_time"));
    if (auto v = take("run", "fixed_pattern")) {
        std::vector<std::uint8_t> bits;
        std::stringstream ss(*v);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            tok = detail::trim(tok);
            if (tok != "0" && tok != "1")
                throw ConfigError("[run] fixed_pattern: expected comma-separated bits, got '" + *v + "'");
            bits.push_back(tok == "1" ? 1 : 0);
        }
        cfg.fixed_pattern_bits = std::move(bits);
    }

    if (auto v = take("attack", "type")) {
        if (*v == "none") cfg.attack.kind = AttackDescriptor::Kind::none;
        else if (*v == "intercept-resend") cfg.attack.kind = AttackDescriptor::Kind::intercept_resend;
        else if (*v == "beam-splitter") cfg.attack.kind = AttackDescriptor::Kind::beam_splitter;
        else throw ConfigError("[attack] type: expected none, intercept-resend or beam-splitter");
    }
    if (auto v = take("attack", "intercept_fraction"))
        cfg.attack.ir.intercept_fraction = parse_pure(*v, field("attack", "intercept_fraction"));
    if (auto v = take("attack", "resend_mean_photon"))
        cfg.attack.ir.resend_mean_photon = parse_pure(*v, field("attack", "resend_mean_photon"));
    if (auto v = take("attack", "tap_ratio"))
        cfg.attack.bs.tap_ratio = parse_pure(*v, field("attack", "tap_ratio"));

    for (const auto& [section, keys] : raw)
        if (!keys.empty())
            throw ConfigError("unknown config key [" + section + "] " + keys.begin()->first);

    // Gates follow the pulse clock; an unset gate width means always-on.
    cfg.spd.gate_period_s = cfg.source.period_s();
    cfg.spd.gate_width_s = gate_width.value_or(cfg.source.period_s());

    cfg.validate();
    out.guard.validate(cfg.source.bin_width_s);
    return out;
}

inline LoadedConfig load_session_config_file(const std::string& path) {
    return load_session_config(parse_config_file(path));
}

} // namespace dpsqkd
