#pragma once

#include <stdexcept>
#include <string>

namespace pavepci {

// Root of every error the library throws. The CLI maps ConfigError to exit
// code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid architecture, hyperparameter, or option combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Tensor shape or value that violates an operation's precondition.
class InputError : public Error {
 public:
  using Error::Error;
};

// Manifest, image, or checkpoint that cannot be read.
class LoadError : public Error {
 public:
  using Error::Error;
};

// Checkpoint architecture header does not match the requested model.
class SpecMismatchError : public LoadError {
 public:
  using LoadError::LoadError;
};

// Metric that is mathematically undefined for the given samples.
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or gradient during optimization.
class TrainingError : public Error {
 public:
  using Error::Error;
};

// Operation requested on a model family that does not support it.
class UnsupportedModelError : public Error {
 public:
  using Error::Error;
};

}  // namespace pavepci
