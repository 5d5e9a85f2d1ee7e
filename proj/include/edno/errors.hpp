#ifndef EDNO_ERRORS_HPP
#define EDNO_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace edno {

// Shape/precondition violations (bad dims, mismatched channel counts, ...).
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Bad user input that is not a shape problem: malformed config, unknown keys.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// File and container errors (bad magic, truncation, dtype mismatch).
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite values where the pipeline requires finite ones (NaN-loss abort).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace edno

#endif
