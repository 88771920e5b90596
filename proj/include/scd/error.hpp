#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace scd {

enum class Errc {
  MalformedHeader,
  RowArityMismatch,
  TypeMismatch,
  EmptyTrace,
  Io,
  EmptyColumn,
  UnknownCategory,
  NonFiniteInput,
  TooFewRows,
  NonFiniteLoss,
  AllDimsConstrained,
  EmptySample,
  DuplicateId,
  TooFew,
  UnknownId,
  MissingTrace,
  InconsistentInputs,
  EvaluationError,
  MalformedModel,
  MalformedReport,
  UnlabeledIds,
  InvalidArgument,
};

constexpr std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::MalformedHeader: return "MalformedHeader";
    case Errc::RowArityMismatch: return "RowArityMismatch";
    case Errc::TypeMismatch: return "TypeMismatch";
    case Errc::EmptyTrace: return "EmptyTrace";
    case Errc::Io: return "Io";
    case Errc::EmptyColumn: return "EmptyColumn";
    case Errc::UnknownCategory: return "UnknownCategory";
    case Errc::NonFiniteInput: return "NonFiniteInput";
    case Errc::TooFewRows: return "TooFewRows";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::AllDimsConstrained: return "AllDimsConstrained";
    case Errc::EmptySample: return "EmptySample";
    case Errc::DuplicateId: return "DuplicateId";
    case Errc::TooFew: return "TooFew";
    case Errc::UnknownId: return "UnknownId";
    case Errc::MissingTrace: return "MissingTrace";
    case Errc::InconsistentInputs: return "InconsistentInputs";
    case Errc::EvaluationError: return "EvaluationError";
    case Errc::MalformedModel: return "MalformedModel";
    case Errc::MalformedReport: return "MalformedReport";
    case Errc::UnlabeledIds: return "UnlabeledIds";
    case Errc::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Every recoverable failure in the library is an scd::Error carrying a code.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code), detail_(what) {}

  Errc code() const noexcept { return code_; }
  /// The message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

}  // namespace scd
