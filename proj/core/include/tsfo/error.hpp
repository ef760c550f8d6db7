// Copyright 2026 The tsfo Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace tsfo {

/// Coarse error categories. The CLI maps these onto process exit codes.
enum class ErrorCategory {
  kConfig = 2,   // invalid configuration, pruning spec, or CLI arguments
  kData = 3,     // unreadable/ill-formed input files and datasets
  kCompute = 4,  // shape, capacity and numerical failures
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what)
      : Error(ErrorCategory::kCompute, "shape error: " + what) {}
};

class CapacityError : public Error {
 public:
  explicit CapacityError(const std::string& what)
      : Error(ErrorCategory::kCompute, "capacity error: " + what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(ErrorCategory::kConfig, "config error: " + what) {}
};

// Invalid pruning request (granularity/layer mismatch, empty pool, ...).
class SpecError : public Error {
 public:
  explicit SpecError(const std::string& what)
      : Error(ErrorCategory::kConfig, "prune spec error: " + what) {}
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& what)
      : Error(ErrorCategory::kData, "input error: " + what) {}
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what)
      : Error(ErrorCategory::kData, "parse error: " + what) {}
};

class CalibrationError : public Error {
 public:
  explicit CalibrationError(const std::string& what)
      : Error(ErrorCategory::kCompute, "calibration error: " + what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what)
      : Error(ErrorCategory::kData, "i/o error: " + what) {}
};

/// Non-finite losses, gradients or weights.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what)
      : Error(ErrorCategory::kCompute, "numeric error: " + what) {}
};

}  // namespace tsfo
