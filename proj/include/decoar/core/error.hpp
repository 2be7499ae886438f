// Copyright 2026 The decoar Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace decoar {

/// Base for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad arguments, invalid configuration, shape mismatches.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Malformed, truncated or inconsistent input data.
class DataError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public DataError {
 public:
  using DataError::DataError;
};

class VersionMismatchError : public DataError {
 public:
  using DataError::DataError;
};

class TruncatedError : public DataError {
 public:
  using DataError::DataError;
};

class ChecksumError : public DataError {
 public:
  using DataError::DataError;
};

class MissingBlobError : public DataError {
 public:
  using DataError::DataError;
};

/// Non-finite values produced or consumed by a numerical routine.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace decoar
