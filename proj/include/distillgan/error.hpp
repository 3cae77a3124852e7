#pragma once

#include <stdexcept>
#include <string>

namespace distillgan {

// Base of every error the library throws. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf in an input or a loss.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Caller violated a precondition (wrong role, missing grad, non-scalar loss, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Malformed IDX or checkpoint bytes.
class ParseError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace distillgan
