#pragma once

#include <stdexcept>
#include <string>

namespace iccnn {

// Error taxonomy. Every throwing path in the library uses one of these so
// callers can distinguish caller bugs (shape/config/usage) from bad external
// state (validation/io/corruption).

class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

class StateError : public std::runtime_error {
public:
    explicit StateError(const std::string& msg) : std::runtime_error("state error: " + msg) {}
};

class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg)
        : std::runtime_error("validation error: " + msg) {}
};

class UsageError : public std::runtime_error {
public:
    explicit UsageError(const std::string& msg) : std::runtime_error("usage error: " + msg) {}
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

class FormatError : public IoError {
public:
    explicit FormatError(const std::string& msg) : IoError("bad format: " + msg) {}
};

class CorruptionError : public IoError {
public:
    explicit CorruptionError(const std::string& msg) : IoError("corrupt file: " + msg) {}
};

class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error("numeric error: " + msg) {}
};

}  // namespace iccnn
