#pragma once

#include <cstddef>
#include <exception>
#include <stdexcept>
#include <string>

namespace patchbag {

// Base of every error thrown by the library. The CLI maps subclasses onto
// stable exit codes (see exit_code()).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Caller broke an operation's precondition (non-scalar loss, label out of
// range, gradient already populated, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// A bag with zero patches reached an attention operation.
class EmptyBagError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed text manifest. Message names the file and the field.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Binary blob does not match what its manifest promises.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

class SchemaMismatchError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Image or patch has the wrong spatial size.
class SizeError : public Error {
 public:
  using Error::Error;
};

class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class InsufficientForegroundError : public Error {
 public:
  InsufficientForegroundError(const std::string& what, std::size_t valid)
      : Error(what), valid_positions_(valid) {}
  std::size_t valid_positions() const noexcept { return valid_positions_; }

 private:
  std::size_t valid_positions_;
};

// 2 configuration or schema, 3 I/O, 4 numeric or data integrity, 1 anything
// else.
int exit_code(const std::exception& error) noexcept;

}  // namespace patchbag
