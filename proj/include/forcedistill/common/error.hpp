// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace forcedistill {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or length mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Inconsistent configuration (bad patch size, all-zero mask row, unknown key).
class ConfigError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

// Operation not permitted in the current run mode (e.g. reading force in
// sensor-free inference).
class ModeError : public Error {
 public:
  using Error::Error;
};

// Wrong kind of token or object handed to an operation.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss during gradient checking or evaluation.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

class InvariantError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// NaN/inf loss during training; carries the step index.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, long step) : Error(what), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

}  // namespace forcedistill
