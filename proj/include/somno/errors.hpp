#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace somno {

/// Invalid configuration, parameters or call contracts. CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor/signal shape contract violations. CLI exit code 2.
class ShapeError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// Malformed or unreadable data (bad magic, truncation, non-finite input).
/// CLI exit code 3.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Structurally invalid recording/checkpoint file; message carries the byte
/// offset where parsing failed. CLI exit code 3.
class FormatError : public DataError {
public:
    FormatError(const std::string& what, std::uint64_t byte_offset)
        : DataError(what + " (byte offset " + std::to_string(byte_offset) + ")") {}
};

/// Numeric failure during computation (NaN gradients, diverged filter).
/// CLI exit code 4.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace somno
