#pragma once

#include <stdexcept>
#include <string>

namespace rbfdqn {

// Dimension or layout disagreement between two objects.
class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite values showed up where finite ones are required.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operation called in the wrong lifecycle state (empty buffer, step after done, ...).
class StateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad user configuration: unknown keys, unknown task ids, out-of-range values.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or truncated file.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace rbfdqn
