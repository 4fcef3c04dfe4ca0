#pragma once

#include <stdexcept>
#include <string>

namespace dasa {

// Violated precondition or malformed input (CLI exit code 1).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Operand shapes do not agree.
class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Input is well-formed but numerically degenerate (zero vector, zero radius).
class DegenerateInputError : public ContractError {
 public:
  using ContractError::ContractError;
};

// A description does not match the template grammar.
class ParseError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Rejection sampling ran out of retries.
class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Filesystem or format problem (CLI exit code 2).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite loss or failed gradient check (CLI exit code 3).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dasa
