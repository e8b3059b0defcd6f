#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sefc {

enum class ErrorCode {
  Io,
  EmptyFile,
  RaggedRow,
  MissingRawColumn,
  NonNumericColumn,
  SchemaViolation,
  InvalidConfig,
  DegenerateEpisode,
  ExcessiveMissing,
  DuplicateKey,
  InfeasibleProfile,
  NumericalInstability,
  UnsupportedFault,
  ShapeMismatch,
  EmptyDataset,
  MissingChannel,
  DegenerateLabels,
  HorizonOverrun,
  NoCommonPhases,
  EmptyInput,
  HealthyOnlyViolation,
  UnknownAdapter,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the toolkit. `subject` names the offending
/// column, channel, key or field when there is one.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string subject = {});

  ErrorCode code() const noexcept { return code_; }
  const std::string& subject() const noexcept { return subject_; }
  /// Message without the error-code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
  std::string subject_;
};

}  // namespace sefc
