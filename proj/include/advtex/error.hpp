#pragma once

#include <stdexcept>
#include <string>

namespace advtex {

/// Base for every error the library throws. The CLI maps the concrete
/// subclasses onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A file is missing, unreadable or malformed at the byte level.
class IoError : public Error {
public:
    using Error::Error;
};

/// Input data violates a documented invariant (bad index, size mismatch...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Caller passed arguments outside an operation's precondition.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Numerical failure during a computation (NaN, non-termination).
class ComputeError : public Error {
public:
    using Error::Error;
};

} // namespace advtex
