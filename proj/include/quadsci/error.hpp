#pragma once

#include <stdexcept>
#include <string>

namespace quadsci {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed file contents (bad magic, version, header fields).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Payload shorter or longer than the header declares.
class TruncationError : public Error {
 public:
  using Error::Error;
};

// Payload values that violate a data invariant (e.g. NaN).
class DataError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class ResourceError : public Error {
 public:
  using Error::Error;
};

// Caller broke an API contract (non-scalar loss, mismatched key sets, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Weight container is missing entries the configuration requires.
class CompletenessError : public Error {
 public:
  using Error::Error;
};

class DegenerateSensingError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace quadsci
