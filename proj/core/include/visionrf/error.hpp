// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace visionrf {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A value outside the domain of an operation (negative distance, rect out of frame, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Invalid scenario configuration; `key()` names the offending field.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error("config error at '" + key + "': " + what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

// Tensor shapes disagree with a network spec. `layer()` is -1 for input checks.
class ShapeError : public Error {
 public:
  ShapeError(int layer, const std::string& what)
      : Error("shape error at layer " + std::to_string(layer) + ": " + what), layer_(layer) {}
  int layer() const noexcept { return layer_; }

 private:
  int layer_;
};

// NaN or Inf produced by a forward pass or a loss.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Base for on-disk format problems.
class FormatError : public Error {
 public:
  using Error::Error;
};

class UnsupportedVersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedFileError : public FormatError {
 public:
  TruncatedFileError(const std::string& path, std::size_t expected, std::size_t actual)
      : FormatError(path + ": expected " + std::to_string(expected) + " bytes, found " +
                    std::to_string(actual)),
        expected_(expected),
        actual_(actual) {}
  std::size_t expected_bytes() const noexcept { return expected_; }
  std::size_t actual_bytes() const noexcept { return actual_; }

 private:
  std::size_t expected_;
  std::size_t actual_;
};

class MalformedCsvError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace visionrf
