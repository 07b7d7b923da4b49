#include "uno/error.hpp"

namespace uno {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::DegenerateGradient: return "DegenerateGradient";
    case ErrorCode::LayoutMismatch: return "LayoutMismatch";
    case ErrorCode::NonFiniteActivation: return "NonFiniteActivation";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::NonPsdCovariance: return "NonPsdCovariance";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::CountMismatch: return "CountMismatch";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::EmptyForgetSet: return "EmptyForgetSet";
    case ErrorCode::EmptyRetainSet: return "EmptyRetainSet";
    case ErrorCode::MissingPair: return "MissingPair";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace uno
