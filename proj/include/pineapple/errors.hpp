#pragma once

#include <stdexcept>
#include <string>

namespace pineapple {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A scaling factor or parameter lies outside its declared range.
class RangeError : public Error {
public:
    using Error::Error;
};

/// A query point lies outside the normalized domain.
class DomainError : public Error {
public:
    using Error::Error;
};

/// A parameter that must be non-zero is zero (for example D_k = 0).
class SingularParameterError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration value or inconsistent configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// The reference solver produced a non-finite field.
class DivergenceError : public Error {
public:
    using Error::Error;
};

/// The regularized normal equations could not be factorized.
class ConditioningError : public Error {
public:
    using Error::Error;
};

/// Equilibrium-potential evaluation produced a non-finite value.
class CurveDomainError : public Error {
public:
    using Error::Error;
};

/// A discharge curve has no usable samples.
class EmptyCurveError : public Error {
public:
    using Error::Error;
};

/// Input file does not match the expected column schema.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// Too many rows of an input file were rejected.
class IngestionError : public Error {
public:
    using Error::Error;
};

/// Malformed persisted artifact (basis file, label file, manifest).
class FormatError : public Error {
public:
    using Error::Error;
};

}  // namespace pineapple
