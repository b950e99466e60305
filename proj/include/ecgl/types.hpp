#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ecgl {

using NodeId = std::int32_t;
using EdgeOffset = std::int64_t;
using ClassId = std::int32_t;
using TaskId = std::int32_t;

/// Failure categories surfaced by the command line tool as distinct exit codes.
enum class ErrorKind { config, data, numeric };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

}  // namespace ecgl
