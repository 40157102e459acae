#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace putf {

// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shape / dimension mismatch.
struct ShapeError : Error {
    using Error::Error;
};

// Out-of-range index (gather, slice, neighbor tables).
struct IndexError : Error {
    using Error::Error;
};

// Invalid configuration (model hyperparameters, CLI combinations).
struct ConfigError : Error {
    using Error::Error;
};

// Invalid argument value at runtime (k > N, empty point set, ...).
struct ArgumentError : Error {
    using Error::Error;
};

// Non-finite value produced by a forward op, or a degenerate numeric
// condition (zero batch variance). Surfaced immediately, never propagated.
struct NumericError : Error {
    using Error::Error;
};

// Text parse failure; line is 1-based.
struct ParseError : Error {
    ParseError(const std::string& msg, std::size_t line_no)
        : Error(msg + " (line " + std::to_string(line_no) + ")"), line(line_no) {}
    std::size_t line;
};

// Filesystem / stream failure.
struct IoError : Error {
    using Error::Error;
};

// Checkpoint integrity failure, one kind per failure class.
struct CheckpointError : Error {
    enum class Kind { BadMagic, Truncated, LengthMismatch, BadConfig };
    CheckpointError(Kind k, const std::string& msg) : Error(msg), kind(k) {}
    Kind kind;
};

}  // namespace putf
