#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tirbench {

/// Bad argument to a pure computation (threshold out of range, unsorted input, ...).
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A line of a line-delimited file could not be parsed.
class ParseError : public std::runtime_error {
public:
    ParseError(std::string source, std::size_t line, const std::string& what)
        : std::runtime_error(source + ":" + std::to_string(line) + ": " + what),
          source_(std::move(source)), line_(line) {}

    const std::string& source() const noexcept { return source_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::string source_;
    std::size_t line_;
};

/// A parsed record broke one of its invariants. `field()` names the offending field.
class ValidationError : public std::runtime_error {
public:
    ValidationError(std::string field, const std::string& what)
        : std::runtime_error("invalid " + field + ": " + what), field_(std::move(field)) {}

    /// Same error, located at `source:line`.
    ValidationError(const ValidationError& inner, const std::string& source, std::size_t line)
        : std::runtime_error(source + ":" + std::to_string(line) + ": " + inner.what()),
          field_(inner.field_), line_(line) {}

    const std::string& field() const noexcept { return field_; }
    /// 1-based line in the source file, 0 when not read from a file.
    std::size_t line() const noexcept { return line_; }

private:
    std::string field_;
    std::size_t line_ = 0;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Endpoint unreachable or kept failing after all retries.
class TransportError : public std::runtime_error {
public:
    TransportError(int status, const std::string& what)
        : std::runtime_error(what), status_(status) {}

    /// Last HTTP status seen, or 0 when the connection itself failed.
    int status() const noexcept { return status_; }

private:
    int status_;
};

/// Endpoint answered, but the reply does not follow the chat-completions contract.
class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The mock client received a request none of its script entries match.
class ScriptedMissError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Missing or malformed configuration value; `field()` is the dotted key.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string& what)
        : std::runtime_error(field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

}  // namespace tirbench
