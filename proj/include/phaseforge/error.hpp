#pragma once

#include <stdexcept>
#include <string>

namespace phaseforge {

/// Input that violates an operation's precondition or a type invariant.
class InvalidInput : public std::invalid_argument {
public:
    explicit InvalidInput(const std::string& what) : std::invalid_argument(what) {}
};

/// Filesystem or format failure while reading or writing artifacts.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite values during training or inference.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool condition, const std::string& message)
{
    if (!condition) {
        throw InvalidInput(message);
    }
}

} // namespace phaseforge
