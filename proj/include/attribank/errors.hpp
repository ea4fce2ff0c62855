// Copyright 2026 The AttriBank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace attribank {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents incompatible with a primitive.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameter, argument or configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input data: dataset contracts, files, checkpoints.
class DataError : public Error {
 public:
  using Error::Error;
};

class TruncatedFileError : public DataError {
 public:
  using DataError::DataError;
};
class BadMagicError : public DataError {
 public:
  using DataError::DataError;
};
class VersionError : public DataError {
 public:
  using DataError::DataError;
};
class LabelRangeError : public DataError {
 public:
  using DataError::DataError;
};
class ChecksumError : public DataError {
 public:
  using DataError::DataError;
};

/// Non-finite loss, gradient or value.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace attribank
