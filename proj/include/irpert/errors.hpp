#pragma once

#include <stdexcept>
#include <string>

namespace irpert {

// Base for every error raised by the toolkit. The CLI maps the subclasses
// onto its exit codes (usage 1, data 2, oracle 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

// Malformed input data: images, layouts, config values.
class DataError : public Error {
 public:
  using Error::Error;
};

class OracleError : public Error {
 public:
  using Error::Error;
};

class TimeoutError : public OracleError {
 public:
  using OracleError::OracleError;
};

class ProtocolError : public OracleError {
 public:
  using OracleError::OracleError;
};

class TransportError : public OracleError {
 public:
  using OracleError::OracleError;
};

class CapabilityError : public OracleError {
 public:
  using OracleError::OracleError;
};

}  // namespace irpert
