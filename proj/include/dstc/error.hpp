#pragma once

#include <stdexcept>
#include <string>

namespace dstc {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Violated precondition or invariant (bad argument, NaN payload, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Operand shapes do not fit the operation.
class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// Input leaves nothing to compute on (all frames masked, zero valid frames).
class DegenerateInputError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// Index or time span outside the addressable range.
class RangeError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// Malformed feature file, manifest or WAV payload.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure. The message always names the path.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace dstc
