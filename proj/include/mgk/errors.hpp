// Error types shared across the library.
#pragma once

#include <stdexcept>
#include <string>

namespace mgk {

// Dimension / shape mismatch between tensor operands.
struct shape_error : std::runtime_error {
    explicit shape_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration value (non-positive variance, bad mode, domain errors).
struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerically degenerate state (fully masked row, zero normalizer, divergence).
struct numeric_error : std::runtime_error {
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

// API contract violation (non-scalar loss, mixed tapes, too few heads).
struct contract_error : std::logic_error {
    explicit contract_error(const std::string& msg) : std::logic_error(msg) {}
};

// Filesystem failure (unwritable path, unreadable input).
struct io_error : std::runtime_error {
    explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mgk
