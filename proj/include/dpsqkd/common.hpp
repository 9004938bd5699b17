#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace dpsqkd {

inline constexpr const char* kVersion = "0.1.0";

inline constexpr double kPi = 3.14159265358979323846;

// Thrown for invalid configuration values detected before any simulation runs.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// Thrown when a requested statistic has no defined value (e.g. QBER of zero counts).
class EmptyResultError : public std::runtime_error {
public:
    explicit EmptyResultError(const std::string& what) : std::runtime_error(what) {}
};

inline double db_to_linear(double db) { return std::pow(10.0, -db / 10.0); }

} // namespace dpsqkd
