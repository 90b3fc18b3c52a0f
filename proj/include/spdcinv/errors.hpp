#pragma once

#include <stdexcept>
#include <string>

namespace spdcinv {

/// Base class for every error raised by the library. `exit_code()` maps the
/// error family onto the process exit status used by the command-line tool.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual int exit_code() const noexcept { return 1; }
};

class ConfigError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

class ParseError : public ConfigError {
public:
    ParseError(const std::string& what, std::size_t byte_offset)
        : ConfigError(what + " (at byte " + std::to_string(byte_offset) + ")"), offset_(byte_offset) {}
    std::size_t byte_offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class ShapeError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

class ResolutionError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

class FeatureError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

class NumericalError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

/// Raised when a coincidence matrix has no mass to normalize.
class NormalizationError : public NumericalError {
public:
    using NumericalError::NumericalError;
    int exit_code() const noexcept override { return 5; }
};

class CoverageError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

class ValidationFailure : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 4; }
};

} // namespace spdcinv
