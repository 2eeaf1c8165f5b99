#include "activemon/error.hpp"

namespace activemon {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::CountMismatch: return "CountMismatch";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ArityMismatch: return "ArityMismatch";
    case ErrorCode::OutOfRangeValue: return "OutOfRangeValue";
    case ErrorCode::EmptyKnownSet: return "EmptyKnownSet";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NotAnExtension: return "NotAnExtension";
    case ErrorCode::MissingClassData: return "MissingClassData";
    case ErrorCode::DegenerateData: return "DegenerateData";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::UnknownClass: return "UnknownClass";
    case ErrorCode::NotAWarningCase: return "NotAWarningCase";
    case ErrorCode::ClassAlreadyKnown: return "ClassAlreadyKnown";
    case ErrorCode::StreamExhausted: return "StreamExhausted";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::MidAdaptation: return "MidAdaptation";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptSnapshot: return "CorruptSnapshot";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

}  // namespace activemon
