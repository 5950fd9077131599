#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cgusum {

// Error surface used across the library. Each category maps to a CLI exit
// code: config -> 1, input/format -> 2, numeric -> 3. Shape errors indicate
// inconsistent tensor wiring and are reported like numeric errors.

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error("numeric error: " + msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

struct InputError : std::runtime_error {
    explicit InputError(const std::string& msg) : std::runtime_error("input error: " + msg) {}
};

struct FormatError : std::runtime_error {
    FormatError(const std::string& msg, uint64_t byte_offset)
        : std::runtime_error("format error at byte " + std::to_string(byte_offset) + ": " + msg),
          offset(byte_offset) {}
    uint64_t offset;
};

}  // namespace cgusum
