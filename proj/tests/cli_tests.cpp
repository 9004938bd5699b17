#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
    const char* p = std::getenv("DPS_QKD_CLI");
    REQUIRE(p != nullptr);
    return p;
}

std::string config_dir() {
    const char* p = std::getenv("DPS_QKD_CONFIG_DIR");
    REQUIRE(p != nullptr);
    return p;
}

struct CliResult {
    int exit_code;
    std::string output; // stdout + stderr
};

CliResult run_cli(const std::string& args) {
    const std::string cmd = "'" + cli_path() + "' " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string output;
    std::array<char, 4096> buf{};
    while (std::fgets(buf.data(), buf.size(), pipe)) output += buf.data();
    const int status = pclose(pipe);
    return {WEXITSTATUS(status), output};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("dpsqkd_cli_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> lines;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line))
        if (!line.empty()) lines.push_back(line);
    return lines;
}

} // namespace

TEST_CASE("budget prints the reference table with exact totals") {
    const auto res = run_cli("budget");
    REQUIRE(res.exit_code == 0);
    const auto lines = lines_of(res.output);
    REQUIRE(lines.front() == "source,qber_1ns,qber_0p4ns");
    REQUIRE(lines.size() == 8);
    REQUIRE(lines.back() == "total,0.1453,0.2318");
}

TEST_CASE("simulate is deterministic and accounts for every click") {
    const std::string config = config_dir() + std::string("/ideal.conf");
    const auto dir_a = fresh_dir("sim_a");
    const auto dir_b = fresh_dir("sim_b");

    const auto a = run_cli("simulate --config '" + config + "' --pulses 20000 --out '" +
                           dir_a.string() + "'");
    REQUIRE(a.exit_code == 0);
    const auto b = run_cli("simulate --config '" + config + "' --pulses 20000 --out '" +
                           dir_b.string() + "'");
    REQUIRE(b.exit_code == 0);

    for (const char* name : {"records.csv", "summary.json", "manifest.json", "sifted_key.csv"})
        REQUIRE(slurp(dir_a / name) == slurp(dir_b / name));

    const auto summary = slurp(dir_a / "summary.json");
    REQUIRE(summary.find("\"qber\": 0.0") != std::string::npos);

    // a different seed changes the records
    const auto dir_c = fresh_dir("sim_c");
    const auto c = run_cli("simulate --config '" + config + "' --pulses 20000 --seed 7 --out '" +
                           dir_c.string() + "'");
    REQUIRE(c.exit_code == 0);
    REQUIRE(slurp(dir_a / "records.csv") != slurp(dir_c / "records.csv"));
}

TEST_CASE("simulate exit codes") {
    SECTION("missing config file") {
        const auto res = run_cli("simulate --config /nonexistent.conf --out /tmp/dpsqkd_nowhere");
        REQUIRE(res.exit_code == 2);
    }

    SECTION("invalid config field names the key") {
        const auto dir = fresh_dir("badcfg");
        const auto path = dir / "bad.conf";
        std::ofstream(path) << "[source]\nbin_width = 1\n";
        const auto res = run_cli("simulate --config '" + path.string() + "' --out '" +
                                 dir.string() + "'");
        REQUIRE(res.exit_code == 2);
        REQUIRE(res.output.find("bin_width") != std::string::npos);
    }

    SECTION("zero sifted bits") {
        const auto dir = fresh_dir("empty");
        const auto path = dir / "dark.conf";
        std::ofstream(path) << "[source]\nmean_photon_number = 1e-9\n"
                            << "[spd]\ndark_count_rate = 0 /s\n"
                            << "[run]\npulses = 1000\n";
        const auto res = run_cli("simulate --config '" + path.string() + "' --out '" +
                                 dir.string() + "'");
        REQUIRE(res.exit_code == 3);
    }
}

TEST_CASE("a 200 ps guard discards about a fifth of the key") {
    const std::string config = config_dir() + std::string("/guard200.conf");
    const auto dir = fresh_dir("guard");
    const auto res = run_cli("simulate --config '" + config + "' --pulses 400000 --out '" +
                             dir.string() + "'");
    REQUIRE(res.exit_code == 0);
    const auto summary = slurp(dir / "summary.json");
    const auto pos = summary.find("\"guard_discard_fraction\": ");
    REQUIRE(pos != std::string::npos);
    const double fraction = std::stod(summary.substr(pos + 26));
    REQUIRE(fraction > 0.12);
    REQUIRE(fraction < 0.28);
}

TEST_CASE("sweep emits the fixed column schema") {
    const std::string config = config_dir() + std::string("/default.conf");

    SECTION("distance grid 0:105:5 has 22 rows") {
        const auto res = run_cli("sweep --config '" + config + "' --axis distance --range 0:105:5");
        REQUIRE(res.exit_code == 0);
        const auto lines = lines_of(res.output);
        REQUIRE(lines.front() ==
                "distance_km,sifted_rate_bps,qber,secure_rate_bps,sift_fraction,discard_fraction");
        REQUIRE(lines.size() == 23);
    }

    SECTION("guard grid with Monte Carlo columns") {
        const auto res = run_cli("sweep --config '" + config +
                                 "' --axis guard_time --range 0:400ps:100ps --mc --pulses 20000");
        REQUIRE(res.exit_code == 0);
        const auto lines = lines_of(res.output);
        REQUIRE(lines.front().find(",mc_sifted_rate_bps,mc_qber,mc_secure_rate_bps,"
                                   "mc_discard_fraction") != std::string::npos);
        REQUIRE(lines.size() == 6);
    }

    SECTION("bin-count grid carries the sift fraction") {
        // a 40 ns period holds the wider packets
        const auto dir = fresh_dir("bins");
        const auto path = dir / "wide.conf";
        std::ofstream(path) << "[source]\nrep_rate = 25 MHz\n";
        const auto res = run_cli("sweep --config '" + path.string() + "' --axis n_bins --range 2:8:1");
        REQUIRE(res.exit_code == 0);
        const auto lines = lines_of(res.output);
        REQUIRE(lines.size() == 8);
        REQUIRE(lines[1].substr(0, 2) == "2,");
        REQUIRE(lines[1].find(",0.5,0") != std::string::npos); // sift fraction 1/2
        REQUIRE(lines[7].substr(0, 2) == "8,");
        REQUIRE(lines[7].find(",0.875,0") != std::string::npos); // sift fraction 7/8
    }

    SECTION("bad axis is a config error") {
        const auto res = run_cli("sweep --config '" + config + "' --axis bogus --range 0:1:1");
        REQUIRE(res.exit_code == 2);
    }

    SECTION("bad range is a config error") {
        const auto res = run_cli("sweep --config '" + config + "' --axis distance --range 10:0:5");
        REQUIRE(res.exit_code == 2);
    }
}

TEST_CASE("a full intercept-resend attack drives the simulated QBER to one third") {
    const std::string config = config_dir() + std::string("/attack_ir.conf");
    const auto dir = fresh_dir("attack");
    const auto res = run_cli("simulate --config '" + config + "' --pulses 150000 --out '" +
                             dir.string() + "'");
    REQUIRE(res.exit_code == 0);
    const auto summary = slurp(dir / "summary.json");
    const auto pos = summary.find("\"qber\": ");
    REQUIRE(pos != std::string::npos);
    const double q = std::stod(summary.substr(pos + 8));
    REQUIRE(q > 1.0 / 3.0 - 0.01);
    REQUIRE(q < 1.0 / 3.0 + 0.01);
}

TEST_CASE("a beam-splitter tap reports Eve's information bound") {
    const auto dir = fresh_dir("bs");
    const auto path = dir / "bs.conf";
    std::ofstream(path) << "[attack]\ntype = beam-splitter\ntap_ratio = 0.1\n"
                        << "[run]\npulses = 50000\n";
    const auto res = run_cli("simulate --config '" + path.string() + "' --out '" + dir.string() +
                             "'");
    REQUIRE(res.exit_code == 0);
    const auto summary = slurp(dir / "summary.json");
    const auto pos = summary.find("\"eve_info_rate\": ");
    REQUIRE(pos != std::string::npos);
    const double rate = std::stod(summary.substr(pos + 17));
    // multi-photon fraction (~0.0826) x tapped flux
    REQUIRE(rate > 0.07 * 0.1 * 0.17 * 62.5e6);
    REQUIRE(rate < 0.09 * 0.1 * 0.17 * 62.5e6);
}

TEST_CASE("every output directory carries a manifest") {
    const std::string config = config_dir() + std::string("/default.conf");
    const auto sweep_dir = fresh_dir("manifest_sweep");
    REQUIRE(run_cli("sweep --config '" + config + "' --axis distance --range 0:10:10 --out '" +
                    sweep_dir.string() + "'")
                .exit_code == 0);
    REQUIRE(fs::exists(sweep_dir / "manifest.json"));
    REQUIRE(fs::exists(sweep_dir / "sweep.csv"));

    const auto att_dir = fresh_dir("manifest_attack");
    REQUIRE(run_cli("attack-report --bins 2 --pulses 5000 --out '" + att_dir.string() + "'")
                .exit_code == 0);
    REQUIRE(fs::exists(att_dir / "manifest.json"));
    REQUIRE(fs::exists(att_dir / "attack_report.csv"));

    const auto bud_dir = fresh_dir("manifest_budget");
    REQUIRE(run_cli("budget --out '" + bud_dir.string() + "'").exit_code == 0);
    REQUIRE(fs::exists(bud_dir / "manifest.json"));
    REQUIRE(fs::exists(bud_dir / "budget.csv"));
}

TEST_CASE("attack-report tabulates exact and simulated error rates") {
    const auto res = run_cli("attack-report --bins 2,3,4 --pulses 30000");
    REQUIRE(res.exit_code == 0);
    const auto lines = lines_of(res.output);
    REQUIRE(lines.front() == "n_bins,qber_exact,qber_mc,mc_std_error,sifted_bits");
    REQUIRE(lines.size() == 4);
    REQUIRE(lines[1].substr(0, 7) == "2,0.25,");
    REQUIRE(lines[2].substr(0, 11) == "3,0.3333333");
    REQUIRE(lines[3].substr(0, 8) == "4,0.375,");

    SECTION("empty bins set") {
        const auto bad = run_cli("attack-report --bins ,");
        REQUIRE(bad.exit_code == 2);
    }
}
