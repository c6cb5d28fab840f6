#pragma once

#include <stdexcept>
#include <string>

namespace oled {

// Invalid configuration, parameters or preconditions.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// File format / filesystem failures.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure (divergence, NaN loss).
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace oled
