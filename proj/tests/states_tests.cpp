#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <vector>

#include "dpsqkd/states.hpp"
#include "support/oracles.hpp"

using namespace dpsqkd;
using Catch::Matchers::WithinAbs;

namespace {

PhasePattern pattern_from_code(int n_bins, unsigned code) {
    std::vector<std::uint8_t> phases(static_cast<std::size_t>(n_bins));
    for (int i = 0; i < n_bins; ++i) phases[static_cast<std::size_t>(i)] = (code >> i) & 1u;
    return PhasePattern(std::move(phases));
}

TimeBinState random_state(int n_bins, RandomStream& rng) {
    TimeBinState st;
    st.bin_width_s = 1e-9;
    st.amplitudes.resize(static_cast<std::size_t>(n_bins));
    double norm = 0.0;
    for (auto& a : st.amplitudes) {
        a = {rng.uniform() - 0.5, rng.uniform() - 0.5};
        norm += std::norm(a);
    }
    for (auto& a : st.amplitudes) a /= std::sqrt(norm);
    return st;
}

} // namespace

TEST_CASE("make_superposition produces uniform signed amplitudes") {
    const double inv_sqrt3 = 1.0 / std::sqrt(3.0);

    auto all_plus = make_superposition(3, PhasePattern({0, 0, 0}), 1e-9);
    for (const auto& a : all_plus.amplitudes) {
        REQUIRE_THAT(a.real(), WithinAbs(inv_sqrt3, 1e-15));
        REQUIRE_THAT(a.imag(), WithinAbs(0.0, 1e-15));
    }

    auto mid_flip = make_superposition(3, PhasePattern({0, 1, 0}), 1e-9);
    REQUIRE_THAT(mid_flip.amplitudes[0].real(), WithinAbs(inv_sqrt3, 1e-15));
    REQUIRE_THAT(mid_flip.amplitudes[1].real(), WithinAbs(-inv_sqrt3, 1e-15));
    REQUIRE_THAT(mid_flip.amplitudes[2].real(), WithinAbs(inv_sqrt3, 1e-15));

    auto two_bin = make_superposition(2, PhasePattern({0, 0}), 1e-9);
    REQUIRE_THAT(two_bin.amplitudes[0].real(), WithinAbs(1.0 / std::sqrt(2.0), 1e-15));
    REQUIRE_THAT(two_bin.amplitudes[1].real(), WithinAbs(1.0 / std::sqrt(2.0), 1e-15));

    REQUIRE_THAT(all_plus.total_probability(), WithinAbs(1.0, 1e-12));
    REQUIRE_THROWS_AS(make_superposition(4, PhasePattern({0, 0, 0}), 1e-9), ConfigError);
    REQUIRE_THROWS_AS(make_superposition(3, PhasePattern({0, 0, 0}), 0.0), ConfigError);
}

TEST_CASE("differential bits follow the equal-phases-means-zero rule") {
    REQUIRE(differential_bits(PhasePattern({0, 1, 0})) == std::vector<std::uint8_t>{1, 1});
    REQUIRE(differential_bits(PhasePattern({0, 0, 1})) == std::vector<std::uint8_t>{0, 1});
    REQUIRE(differential_bits(PhasePattern({1, 1})) == std::vector<std::uint8_t>{0});

    // from_difference_bits inverts differential_bits
    for (unsigned code = 0; code < 8; ++code) {
        std::vector<std::uint8_t> bits = {static_cast<std::uint8_t>(code & 1u),
                                          static_cast<std::uint8_t>((code >> 1) & 1u),
                                          static_cast<std::uint8_t>((code >> 2) & 1u)};
        REQUIRE(differential_bits(PhasePattern::from_difference_bits(bits)) == bits);
    }

    REQUIRE_THROWS_AS(PhasePattern({0}), ConfigError);
    REQUIRE_THROWS_AS(PhasePattern({0, 2}), ConfigError);
}

TEST_CASE("dli_transform matches hand-computed N=3 distributions") {
    auto dist = dli_transform(make_superposition(3, PhasePattern({0, 0, 0}), 1e-9), 1.0);
    REQUIRE(dist.n_output_bins() == 4);
    REQUIRE_THAT(dist.probability(1, 0), WithinAbs(1.0 / 12.0, 1e-12));
    REQUIRE_THAT(dist.probability(1, 1), WithinAbs(1.0 / 12.0, 1e-12));
    REQUIRE_THAT(dist.probability(2, 0), WithinAbs(1.0 / 3.0, 1e-12));
    REQUIRE_THAT(dist.probability(2, 1), WithinAbs(0.0, 1e-12));
    REQUIRE_THAT(dist.probability(3, 0), WithinAbs(1.0 / 3.0, 1e-12));
    REQUIRE_THAT(dist.probability(3, 1), WithinAbs(0.0, 1e-12));
    REQUIRE_THAT(dist.probability(4, 0), WithinAbs(1.0 / 12.0, 1e-12));
    REQUIRE_THAT(dist.probability(4, 1), WithinAbs(1.0 / 12.0, 1e-12));

    auto flipped = dli_transform(make_superposition(3, PhasePattern({0, 1, 0}), 1e-9), 1.0);
    REQUIRE_THAT(flipped.probability(2, 0), WithinAbs(0.0, 1e-12));
    REQUIRE_THAT(flipped.probability(2, 1), WithinAbs(1.0 / 3.0, 1e-12));
    REQUIRE_THAT(flipped.probability(3, 1), WithinAbs(1.0 / 3.0, 1e-12));
    REQUIRE_THAT(flipped.probability(1, 0), WithinAbs(1.0 / 12.0, 1e-12));
    REQUIRE_THAT(flipped.probability(4, 1), WithinAbs(1.0 / 12.0, 1e-12));
}

TEST_CASE("zero visibility splits every bin evenly between ports") {
    RandomStream rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const auto st = random_state(2 + static_cast<int>(rng.uniform_int(5)), rng);
        const auto dist = dli_transform(st, 0.0);
        for (int k = 1; k <= dist.n_output_bins(); ++k)
            REQUIRE_THAT(dist.probability(k, 0) - dist.probability(k, 1), WithinAbs(0.0, 1e-12));
    }
}

TEST_CASE("dli_transform conserves probability for any visibility") {
    RandomStream rng(11);
    for (int trial = 0; trial < 2000; ++trial) {
        const auto st = random_state(2 + static_cast<int>(rng.uniform_int(6)), rng);
        const double v = rng.uniform();
        REQUIRE_THAT(dli_transform(st, v).total(), WithinAbs(1.0, 1e-12));
    }
    REQUIRE_THROWS_AS(dli_transform(TimeBinState{{{0.5, 0.0}, {0.5, 0.0}}, 1e-9}, 1.0),
                      std::domain_error);
}

TEST_CASE("perfect visibility puts each interference bin on the bit's port") {
    for (int n = 2; n <= 6; ++n) {
        for (unsigned code = 0; code < (1u << n); ++code) {
            const auto pattern = pattern_from_code(n, code);
            const auto bits = differential_bits(pattern);
            const auto dist = dli_transform(make_superposition(n, pattern, 1e-9), 1.0);
            for (int k = 2; k <= n; ++k) {
                const int bit = bits[static_cast<std::size_t>(k - 2)];
                REQUIRE(dist.probability(k, bit) > 0.0);
                REQUIRE_THAT(dist.probability(k, 1 - bit), WithinAbs(0.0, 1e-12));
            }
        }
    }
}

TEST_CASE("edge-bin probabilities ignore pattern and visibility") {
    RandomStream rng(13);
    for (int n = 2; n <= 6; ++n) {
        const double expected = 1.0 / (4.0 * n);
        for (unsigned code = 0; code < (1u << n); ++code) {
            const auto pattern = pattern_from_code(n, code);
            const double v = rng.uniform();
            const auto dist = dli_transform(make_superposition(n, pattern, 1e-9), v);
            REQUIRE_THAT(dist.probability(1, 0), WithinAbs(expected, 1e-12));
            REQUIRE_THAT(dist.probability(1, 1), WithinAbs(expected, 1e-12));
            REQUIRE_THAT(dist.probability(n + 1, 0), WithinAbs(expected, 1e-12));
            REQUIRE_THAT(dist.probability(n + 1, 1), WithinAbs(expected, 1e-12));
        }
    }
}

TEST_CASE("dli_transform agrees with the explicit two-arm expansion") {
    RandomStream rng(17);
    for (int n = 2; n <= 6; ++n) {
        for (unsigned code = 0; code < (1u << n); ++code) {
            const auto st = make_superposition(n, pattern_from_code(n, code), 1e-9);
            for (double v : {1.0, 0.73, 0.0}) {
                const auto dist = dli_transform(st, v);
                const auto ref = oracles::two_arm_dli_reference(st, v);
                for (int k = 1; k <= n + 1; ++k)
                    for (int port = 0; port < 2; ++port)
                        REQUIRE_THAT(dist.probability(k, port),
                                     WithinAbs(ref[static_cast<std::size_t>(k - 1)][port], 1e-12));
            }
        }
    }
    // also holds off the binary alphabet
    for (int trial = 0; trial < 200; ++trial) {
        const auto st = random_state(2 + static_cast<int>(rng.uniform_int(5)), rng);
        const double v = rng.uniform();
        const auto dist = dli_transform(st, v);
        const auto ref = oracles::two_arm_dli_reference(st, v);
        for (int k = 1; k <= dist.n_output_bins(); ++k)
            for (int port = 0; port < 2; ++port)
                REQUIRE_THAT(dist.probability(k, port),
                             WithinAbs(ref[static_cast<std::size_t>(k - 1)][port], 1e-12));
    }
}

TEST_CASE("sample_detection honors the distribution") {
    SECTION("point mass") {
        DetectionDistribution dist;
        dist.bin_width_s = 1e-9;
        dist.probabilities.assign(4, {0.0, 0.0});
        dist.probabilities[1][0] = 1.0;
        RandomStream rng(3);
        for (int i = 0; i < 100; ++i) {
            const auto [bin, port] = sample_detection(dist, rng);
            REQUIRE(bin == 2);
            REQUIRE(port == 0);
        }
    }

    SECTION("uniform N=3 frequencies against the law of large numbers") {
        const auto dist = dli_transform(make_superposition(3, PhasePattern({0, 0, 0}), 1e-9), 1.0);
        RandomStream rng(101);
        const int draws = 1'000'000;
        int centre_constructive = 0;
        int edges = 0;
        for (int i = 0; i < draws; ++i) {
            const auto [bin, port] = sample_detection(dist, rng);
            if (bin == 2 && port == 0) ++centre_constructive;
            if (bin == 1 || bin == 4) ++edges;
        }
        const double p = 1.0 / 3.0;
        const double sigma = std::sqrt(p * (1 - p) / draws);
        REQUIRE_THAT(static_cast<double>(centre_constructive) / draws, WithinAbs(p, 3.5 * sigma));
        REQUIRE_THAT(static_cast<double>(edges) / draws, WithinAbs(1.0 / 3.0, 3.5 * sigma));
    }

    SECTION("fixed seed reproduces the same sequence") {
        const auto dist = dli_transform(make_superposition(3, PhasePattern({0, 1, 0}), 1e-9), 0.8);
        RandomStream a(42), b(42);
        for (int i = 0; i < 1000; ++i) REQUIRE(sample_detection(dist, a) == sample_detection(dist, b));
    }
}
