// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace rotstream {

enum class ErrorCode {
  NonPositiveExtent,
  DegenerateContour,
  InvalidPolygon,
  CellMismatch,
  OutOfImage,
  AssignmentConflict,
  ProbabilityOutOfRange,
  ShapeMismatch,
  EmptyGroundTruth,
  SequenceMismatch,
  ParseError,
  InvalidArgument,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonPositiveExtent: return "NonPositiveExtent";
    case ErrorCode::DegenerateContour: return "DegenerateContour";
    case ErrorCode::InvalidPolygon: return "InvalidPolygon";
    case ErrorCode::CellMismatch: return "CellMismatch";
    case ErrorCode::OutOfImage: return "OutOfImage";
    case ErrorCode::AssignmentConflict: return "AssignmentConflict";
    case ErrorCode::ProbabilityOutOfRange: return "ProbabilityOutOfRange";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyGroundTruth: return "EmptyGroundTruth";
    case ErrorCode::SequenceMismatch: return "SequenceMismatch";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Every recoverable failure in the library is reported as an Error carrying
/// a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// A broken internal invariant (a bug, not bad input).
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace rotstream
