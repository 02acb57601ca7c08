#pragma once

#include <stdexcept>
#include <string>

namespace ruot {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration values (zero dimensions, nonpositive bandwidth, sigma = 0 where a density is needed).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Mismatched dimensions between operands.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Operation called with inputs that violate its preconditions (empty clouds, too few snapshots).
class UsageError : public Error {
public:
    using Error::Error;
};

/// Non-finite values encountered during a computation.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Argument outside the domain of a function (e.g. positive growth for a death-only penalty).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Corrupt or incompatible serialized payload.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Malformed text input; carries the offending line number.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// File system failures (unreadable input, unwritable output).
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace ruot
