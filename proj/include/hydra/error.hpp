#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hydra {

/// Base for every data or model error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed trace input. Carries the 1-based line number and offending field
/// when known (line 0 means "not tied to a line").
class ParseError : public Error {
public:
    ParseError(std::size_t line, std::string field, const std::string& what)
        : Error(format(line, field, what)), line_(line), field_(std::move(field)) {}

    std::size_t line() const noexcept { return line_; }
    const std::string& field() const noexcept { return field_; }

private:
    static std::string format(std::size_t line, const std::string& field, const std::string& what) {
        std::string msg;
        if (line > 0) msg += "line " + std::to_string(line) + ": ";
        if (!field.empty()) msg += "field '" + field + "': ";
        return msg + what;
    }

    std::size_t line_;
    std::string field_;
};

/// Zero-variance input to a correlation.
class UndefinedCorrelation : public Error {
public:
    using Error::Error;
};

/// Model or configuration that cannot be used as given (bad shapes, unknown
/// candidate ids, unsupported format versions).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Live sampling is not possible on this platform or a counter is unreadable.
class SamplerError : public Error {
public:
    using Error::Error;
};

}  // namespace hydra
