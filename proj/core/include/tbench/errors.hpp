#pragma once

#include <stdexcept>
#include <string>

namespace tbench {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Configuration id outside 1..6.
class ConfigurationUnknownError : public Error {
public:
    using Error::Error;
};

/// Sensor geometry does not fit on its pad.
class GeometryViolationError : public Error {
public:
    using Error::Error;
};

/// Reference to a pad, sensor or record that does not exist.
class LookupError : public Error {
public:
    using Error::Error;
};

/// Shape or arity mismatch at an API boundary.
class InterfaceError : public Error {
public:
    using Error::Error;
};

/// Operation called in the wrong episode phase.
class LifecycleError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf encountered in a numeric update.
class NumericFaultError : public Error {
public:
    using Error::Error;
};

/// Mismatched profile/layout or other setup inconsistency.
class ConfigurationError : public Error {
public:
    using Error::Error;
};

/// Experiment config document failed validation. `field()` names the offender.
class ValidationError : public Error {
public:
    ValidationError(std::string field, const std::string& what)
        : Error(field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

}  // namespace tbench
