#pragma once

#include <stdexcept>
#include <string>

namespace nlv {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A required column or key is missing from an input file.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// Input data violates a dataset invariant (availability, alignment, finiteness).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Malformed model specification (syntax, partition, fixed-parameter map).
class SpecError : public Error {
public:
    using Error::Error;
};

/// A utility term references a covariate the data does not provide.
class BindingError : public SpecError {
public:
    using SpecError::SpecError;
};

/// The nest tree is not a two-level partition.
class UnsupportedStructureError : public SpecError {
public:
    using SpecError::SpecError;
};

/// NaN inputs, singular matrices, underflowed probabilities.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Fit indices are undefined for a model with no degrees of freedom.
class SaturatedModelError : public Error {
public:
    using Error::Error;
};

/// An optimizer failed to reach its convergence criterion.
class EstimationError : public Error {
public:
    using Error::Error;
};

/// Machine-readable result file with an unexpected schema version.
class RenderError : public Error {
public:
    using Error::Error;
};

}  // namespace nlv
