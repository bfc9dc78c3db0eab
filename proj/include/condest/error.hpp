#pragma once

#include <stdexcept>
#include <string>

namespace condest {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dimension or shape disagreement between operands.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Malformed input that violates a type invariant (bad index, bad range, ...).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Pivot below the singularity threshold, or a nonpositive eigenvalue where
/// a nonsingular matrix was required.
class SingularMatrix : public Error {
public:
    using Error::Error;
};

/// Non-finite value produced during a numerical computation.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Condition-number label that cannot feed a training target.
class LabelError : public Error {
public:
    using Error::Error;
};

/// Bad configuration, missing files, or schema mismatch on load.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace condest
