// Copyright (c) 2026 The cflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cflow {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree with what an operation requires.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A value lies outside the mathematical domain of an operation (log of a
/// non-positive number, non-positive standard deviation, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// API misuse, e.g. calling backward on a non-scalar.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A loss term became NaN or infinite.
class DivergenceError : public Error {
 public:
  DivergenceError(std::string term, double value)
      : Error("training diverged: loss term '" + term + "' is " + std::to_string(value)),
        term_(std::move(term)),
        value_(value) {}

  const std::string& term() const noexcept { return term_; }
  double value() const noexcept { return value_; }

 private:
  std::string term_;
  double value_;
};

/// Malformed input document. `position` is a byte offset or a 1-based line
/// number depending on the format; `unit()` says which.
class ParseError : public Error {
 public:
  enum class Unit { byte, line };

  ParseError(const std::string& what, std::size_t position, Unit unit)
      : Error(what), position_(position), unit_(unit) {}

  std::size_t position() const noexcept { return position_; }
  Unit unit() const noexcept { return unit_; }

 private:
  std::size_t position_;
  Unit unit_;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input that carries invalid values (label out of range, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace cflow
