#pragma once

#include <stdexcept>
#include <string>

namespace nsmeta {

/// Base class of every error raised by the library. The CLI maps the
/// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Array or tensor dimensions are inconsistent with the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A parameter or configuration value is outside its supported range.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input lies outside the mathematical domain of a function.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// An object was used in the wrong lifecycle state (e.g. backward before forward).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Malformed, corrupt or inconsistent data (files, right-hand sides).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Linear system too close to singular to solve reliably.
class ConditioningError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or gradient during optimization.
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Non-finite intermediate value during inference.
class InferenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace nsmeta
