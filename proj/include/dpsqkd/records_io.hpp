#pragma once

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "dpsqkd/common.hpp"
#include "dpsqkd/protocol.hpp"

namespace dpsqkd {

// One exported click: pulse_index,time_ns,bin,port,alice_bit,bob_bit,flags
// flags: S sifted, E edge-bin discard, G guard-band discard, U unassigned.
// Times carry 0.1 ps resolution, which keeps the text form bit-exact under
// repeated read/write cycles.
struct ExportRow {
    std::int64_t pulse = -1;
    double time_ns = 0.0;
    int bin = -1;
    int port = -1;
    int alice_bit = -1;
    int bob_bit = -1;
    char flag = 'U';
};

inline std::string format_row(const ExportRow& row) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%" PRId64 ",%.4f,%d,%d,%d,%d,%c", row.pulse, row.time_ns,
                  row.bin, row.port, row.alice_bit, row.bob_bit, row.flag);
    return std::string(buf);
}

inline std::vector<ExportRow> session_rows(const SessionRecord& record, const GuardBandPolicy& guard) {
    guard.validate(record.config.source.bin_width_s);
    const int n = record.config.source.n_bins;
    const double keep_half_width = (record.config.source.bin_width_s - guard.guard_time_s) / 2.0;
    std::vector<ExportRow> rows;
    rows.reserve(record.timestamps.size());
    for (const auto& ts : record.timestamps) {
        ExportRow row;
        row.pulse = ts.pulse;
        row.time_ns = ts.time_s * 1e9;
        row.bin = ts.bin;
        row.port = ts.port;
        if (ts.bin < 0) {
            row.flag = 'U';
        } else if (std::abs(bin_center_offset(ts, record.config.multiplex, record.config.source)) >
                   keep_half_width) {
            row.flag = 'G';
        } else if (ts.bin == 1 || ts.bin == n + 1) {
            row.flag = 'E';
        } else {
            row.flag = 'S';
            row.alice_bit = record.alice_bit(ts.pulse, ts.bin - 1);
            row.bob_bit = ts.port;
        }
        rows.push_back(row);
    }
    return rows;
}

inline void export_records(std::ostream& os, const std::vector<ExportRow>& rows) {
    for (const auto& row : rows) os << format_row(row) << '\n';
}

inline std::vector<ExportRow> import_records(std::istream& is) {
    std::vector<ExportRow> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        ExportRow row;
        char flag = 0;
        if (std::sscanf(line.c_str(), "%" SCNd64 ",%lf,%d,%d,%d,%d,%c", &row.pulse, &row.time_ns,
                        &row.bin, &row.port, &row.alice_bit, &row.bob_bit, &flag) != 7)
            throw ConfigError("malformed record line: " + line);
        if (flag != 'S' && flag != 'E' && flag != 'G' && flag != 'U')
            throw ConfigError("unknown record flag in line: " + line);
        row.flag = flag;
        rows.push_back(row);
    }
    return rows;
}

} // namespace dpsqkd
