#include "domino/error.hpp"

namespace domino {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::CycleDetected: return "CycleDetected";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DanglingTensorRef: return "DanglingTensorRef";
    case ErrorCode::JoinArityMismatch: return "JoinArityMismatch";
    case ErrorCode::UnsupportedLayer: return "UnsupportedLayer";
    case ErrorCode::UnsupportedActivation: return "UnsupportedActivation";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::BadRecordSize: return "BadRecordSize";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::AlreadyPruned: return "AlreadyPruned";
    case ErrorCode::OverlapWithPruned: return "OverlapWithPruned";
    case ErrorCode::NothingLeftToPrune: return "NothingLeftToPrune";
    case ErrorCode::PrunedChannel: return "PrunedChannel";
    case ErrorCode::MissingGradients: return "MissingGradients";
    case ErrorCode::MissingActivations: return "MissingActivations";
    case ErrorCode::ZeroCount: return "ZeroCount";
    case ErrorCode::IncompleteClosure: return "IncompleteClosure";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::EmptyTrace: return "EmptyTrace";
    case ErrorCode::MissingBaseline: return "MissingBaseline";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace domino
