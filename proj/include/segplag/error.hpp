#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace segplag {

/// Base of every exception thrown by the engine.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed input text. Carries the 1-based line number when known (0 otherwise).
class ParseError : public Error {
  public:
    ParseError(const std::string &what, std::size_t line = 0)
        : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }

    /// Same error with `prefix` (e.g. a file path) in front of the message.
    [[nodiscard]] ParseError prefixed(const std::string &prefix) const { return {prefix + what(), line_, Raw{}}; }

  private:
    struct Raw {};
    ParseError(const std::string &message, std::size_t line, Raw) : Error(message), line_(line) {}

    std::size_t line_;
};

/// Well-formed input that breaks a domain invariant.
class ValidationError : public Error {
  public:
    ValidationError(const std::string &what, std::size_t line = 0)
        : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }

    /// Same error with `prefix` (e.g. a file path) in front of the message.
    [[nodiscard]] ValidationError prefixed(const std::string &prefix) const { return {prefix + what(), line_, Raw{}}; }

  private:
    struct Raw {};
    ValidationError(const std::string &message, std::size_t line, Raw) : Error(message), line_(line) {}

    std::size_t line_;
};

class IoError : public Error {
  public:
    using Error::Error;
};

/// Index file with a bad magic, version or checksum.
class FormatError : public Error {
  public:
    using Error::Error;
};

/// Segments or an index built on incompatible grid parameters.
class GridMismatch : public Error {
  public:
    using Error::Error;
};

/// A time window that does not start and end on downbeats a whole number of bars apart.
class AlignmentError : public Error {
  public:
    using Error::Error;
};

class ConfigError : public Error {
  public:
    using Error::Error;
};

}  // namespace segplag
