// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace cml {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition (wrong shape, non-scalar loss, ...).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf showed up in a forward value or a gradient.
class NumericFault : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

/// Snapshot or update does not match the store it is applied to.
class IncompatibleSnapshot : public Error {
 public:
  using Error::Error;
};

/// Language sets disagree, or data does not cover every required language.
class CoverageError : public Error {
 public:
  using Error::Error;
};

/// A required artifact (language matrix, adapter stack, ...) was not produced.
class DependencyError : public Error {
 public:
  using Error::Error;
};

class MissingAdapter : public DependencyError {
 public:
  using DependencyError::DependencyError;
};

/// Sparse update built against a different base than the store it targets.
class StaleBase : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace cml
