#include "tarq/error.hpp"

namespace tarq {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSingularMetric: return "SingularMetric";
    case ErrorCode::kDimMismatch: return "DimMismatch";
    case ErrorCode::kBitsUnsupported: return "BitsUnsupported";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kEmptyBatch: return "EmptyBatch";
    case ErrorCode::kEmptyUtterance: return "EmptyUtterance";
    case ErrorCode::kInsufficientCorpus: return "InsufficientCorpus";
    case ErrorCode::kShapeChainMismatch: return "ShapeChainMismatch";
    case ErrorCode::kBadSpec: return "BadSpec";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kEmptyReport: return "EmptyReport";
    case ErrorCode::kParseError: return "ParseError";
  }
  return "Unknown";
}

}  // namespace tarq
