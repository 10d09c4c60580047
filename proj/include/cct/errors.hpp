#pragma once

#include <stdexcept>
#include <string>

namespace cct {

struct ZeroNormError : std::runtime_error {
    explicit ZeroNormError(const std::string& what) : std::runtime_error(what) {}
};

struct BatchTooSmall : std::runtime_error {
    explicit BatchTooSmall(const std::string& what) : std::runtime_error(what) {}
};

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct ParseError : std::runtime_error {
    ParseError(const std::string& what, long line_number)
        : std::runtime_error(what + " (line " + std::to_string(line_number) + ")"),
          line(line_number) {}
    long line;
};

struct EmptySourceError : std::runtime_error {
    explicit EmptySourceError(const std::string& what) : std::runtime_error(what) {}
};

struct CurationStarvation : std::runtime_error {
    explicit CurationStarvation(const std::string& what) : std::runtime_error(what) {}
};

struct NonFiniteLoss : std::runtime_error {
    explicit NonFiniteLoss(const std::string& what) : std::runtime_error(what) {}
};

struct NonFiniteValue : std::runtime_error {
    explicit NonFiniteValue(const std::string& what) : std::runtime_error(what) {}
};

struct OracleError : std::runtime_error {
    explicit OracleError(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cct
