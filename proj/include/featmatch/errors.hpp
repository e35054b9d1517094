#pragma once

#include <stdexcept>
#include <string>

namespace featmatch {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A linear system or design matrix is (numerically) singular.
class SingularSystem : public Error {
public:
    using Error::Error;
};

/// A stochastic or skeleton trajectory left the overflow guard.
class ExplosiveSimulation : public Error {
public:
    using Error::Error;
};

/// Derivatives requested at a point where the skeleton map is not differentiable
/// (a SETAR state exactly on its threshold).
class NonDifferentiablePoint : public Error {
public:
    using Error::Error;
};

/// Missing file, malformed row, schema mismatch.
class DataError : public Error {
public:
    using Error::Error;
};

}  // namespace featmatch
