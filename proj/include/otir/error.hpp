#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace otir {

enum class ErrorKind {
  InvalidArgument,
  InitiationAfterFollowup,
  InitiationOutsideWindow,
  MissingInitiation,
  NonPositiveTime,
  BinaryOutOfRange,
  EmptyRiskSet,
  EmptyDataset,
  DegenerateCensoring,
  SchemaMismatch,
  DegenerateVariance,
  ObservedRegimeNeedsSubject,
  NonFiniteObjective,
  FoldTooSmall,
  EmptyCriticalSubset,
  NoObservedInitiations,
  TooManyFailures,
  ParseError,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::InitiationAfterFollowup: return "InitiationAfterFollowup";
    case ErrorKind::InitiationOutsideWindow: return "InitiationOutsideWindow";
    case ErrorKind::MissingInitiation: return "MissingInitiation";
    case ErrorKind::NonPositiveTime: return "NonPositiveTime";
    case ErrorKind::BinaryOutOfRange: return "BinaryOutOfRange";
    case ErrorKind::EmptyRiskSet: return "EmptyRiskSet";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::DegenerateCensoring: return "DegenerateCensoring";
    case ErrorKind::SchemaMismatch: return "SchemaMismatch";
    case ErrorKind::DegenerateVariance: return "DegenerateVariance";
    case ErrorKind::ObservedRegimeNeedsSubject: return "ObservedRegimeNeedsSubject";
    case ErrorKind::NonFiniteObjective: return "NonFiniteObjective";
    case ErrorKind::FoldTooSmall: return "FoldTooSmall";
    case ErrorKind::EmptyCriticalSubset: return "EmptyCriticalSubset";
    case ErrorKind::NoObservedInitiations: return "NoObservedInitiations";
    case ErrorKind::TooManyFailures: return "TooManyFailures";
    case ErrorKind::ParseError: return "ParseError";
  }
  return "Unknown";
}

/// Single exception type for the library. `kind()` identifies the failure;
/// `row()` is set when the failure can be pinned to one input record.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what, std::optional<std::size_t> row = std::nullopt)
      : std::runtime_error(format(kind, what, row)), kind_(kind), row_(row) {}

  ErrorKind kind() const noexcept { return kind_; }
  std::optional<std::size_t> row() const noexcept { return row_; }

 private:
  static std::string format(ErrorKind kind, const std::string& what,
                            std::optional<std::size_t> row) {
    std::string msg{to_string(kind)};
    if (row) msg += " (row " + std::to_string(*row) + ")";
    msg += ": ";
    msg += what;
    return msg;
  }

  ErrorKind kind_;
  std::optional<std::size_t> row_;
};

}  // namespace otir
