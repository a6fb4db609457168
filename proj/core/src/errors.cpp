#include "atomflow/errors.hpp"

namespace atomflow {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::DomainFieldMismatch: return "DomainFieldMismatch";
    case ErrorKind::DomainMismatch: return "DomainMismatch";
    case ErrorKind::RangeError: return "RangeError";
    case ErrorKind::ShapeError: return "ShapeError";
    case ErrorKind::DegenerateCell: return "DegenerateCell";
    case ErrorKind::NonFiniteInput: return "NonFiniteInput";
    case ErrorKind::NonFiniteActivation: return "NonFiniteActivation";
    case ErrorKind::EmptyBatch: return "EmptyBatch";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::TimeOutOfRange: return "TimeOutOfRange";
    case ErrorKind::UnsupportedGroup: return "UnsupportedGroup";
    case ErrorKind::UnsupportedDomain: return "UnsupportedDomain";
    case ErrorKind::InfeasibleWidth: return "InfeasibleWidth";
    case ErrorKind::TapOutOfRange: return "TapOutOfRange";
    case ErrorKind::AllMasked: return "AllMasked";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::SchemaVersionError: return "SchemaVersionError";
    case ErrorKind::UnknownElement: return "UnknownElement";
    case ErrorKind::ChecksumError: return "ChecksumError";
    case ErrorKind::ConfigMismatch: return "ConfigMismatch";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

bool Error::is_validation_error() const noexcept {
  switch (kind_) {
    case ErrorKind::NonFiniteActivation:
    case ErrorKind::IoError:
      return false;
    default:
      return true;
  }
}

}  // namespace atomflow
