// Copyright 2026 The trainscope Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace trainscope {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or lengths that do not chain.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf in inputs or gradients.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A desk-scale size cap (Hessian diagonal, dense reference) was exceeded.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Input violates an operation precondition (zero step, tiny batch, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or command-line value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed log or CSV input.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace trainscope
