#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace atomflow {

enum class ErrorKind {
  DomainFieldMismatch,
  DomainMismatch,
  RangeError,
  ShapeError,
  DegenerateCell,
  NonFiniteInput,
  NonFiniteActivation,
  EmptyBatch,
  EmptyInput,
  TimeOutOfRange,
  UnsupportedGroup,
  UnsupportedDomain,
  InfeasibleWidth,
  TapOutOfRange,
  AllMasked,
  ParseError,
  SchemaVersionError,
  UnknownElement,
  ChecksumError,
  ConfigMismatch,
  ConfigError,
  IoError,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// True for errors caused by bad user input (CLI exit code 1) rather than runtime failure.
  bool is_validation_error() const noexcept;

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace atomflow
