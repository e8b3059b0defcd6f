#include "sefc/errors.hpp"

namespace sefc {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Io: return "IoError";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::RaggedRow: return "RaggedRow";
    case ErrorCode::MissingRawColumn: return "MissingRawColumn";
    case ErrorCode::NonNumericColumn: return "NonNumericColumn";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::DegenerateEpisode: return "DegenerateEpisode";
    case ErrorCode::ExcessiveMissing: return "ExcessiveMissing";
    case ErrorCode::DuplicateKey: return "DuplicateKey";
    case ErrorCode::InfeasibleProfile: return "InfeasibleProfile";
    case ErrorCode::NumericalInstability: return "NumericalInstability";
    case ErrorCode::UnsupportedFault: return "UnsupportedFault";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::MissingChannel: return "MissingChannel";
    case ErrorCode::DegenerateLabels: return "DegenerateLabels";
    case ErrorCode::HorizonOverrun: return "HorizonOverrun";
    case ErrorCode::NoCommonPhases: return "NoCommonPhases";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::HealthyOnlyViolation: return "HealthyOnlyViolation";
    case ErrorCode::UnknownAdapter: return "UnknownAdapter";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message, std::string subject)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code),
      detail_(message),
      subject_(std::move(subject)) {}

}  // namespace sefc
