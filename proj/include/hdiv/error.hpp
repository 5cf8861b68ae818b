#pragma once

#include <stdexcept>
#include <string>

namespace hdiv {

// Base for all library errors. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed data: wrong shapes, non-finite cells, bad shares, schema problems.
class InputError : public Error {
public:
    using Error::Error;
};

// Invalid tuning or simulation parameters.
class ConfigError : public Error {
public:
    using Error::Error;
};

// The instrument carries (numerically) no first-stage signal; Wald inference is
// refused and score-based inference should be used instead.
class WeakIdentificationError : public Error {
public:
    using Error::Error;
};

// Score statistic with an all-zero moment vector.
class DegenerateStatisticError : public Error {
public:
    using Error::Error;
};

}  // namespace hdiv
