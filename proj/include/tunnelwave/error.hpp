// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tunnelwave Authors
#pragma once

#include <stdexcept>
#include <string>

namespace tunnelwave {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or violated precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Numerical failure (non-finite values, degenerate statistics).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Binary file format failure. `kind()` distinguishes the failure modes.
class FormatError : public Error {
 public:
  enum class Kind { bad_magic, unsupported_version, truncated, dimension_overflow, malformed, io };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace tunnelwave
