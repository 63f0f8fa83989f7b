#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tilert {

/// Base of every error raised by the runtime.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class SingularMatrix : public Error {
public:
    using Error::Error;
};

/// Freeing an offset that is not an occupied arena segment.
class InvalidFree : public Error {
public:
    using Error::Error;
};

/// Every cached block on a device stays pinned even after a synchronization.
class CapacityDeadlock : public Error {
public:
    using Error::Error;
};

class InvalidTopology : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    ConfigError(const std::string& what, std::size_t line)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    /// 1-based source line, 0 when unknown.
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A broken runtime invariant. Never expected outside of bugs.
class InternalError : public Error {
public:
    using Error::Error;
};

}  // namespace tilert
