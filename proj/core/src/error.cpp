#include "pnshape/error.hpp"

namespace pnshape {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidParameter: return "invalid-parameter";
    case ErrorCode::kZeroPowerSignal: return "zero-power-signal";
    case ErrorCode::kEmptyInput: return "empty-input";
    case ErrorCode::kInvalidLength: return "invalid-length";
    case ErrorCode::kLengthMismatch: return "length-mismatch";
    case ErrorCode::kSizeMismatch: return "size-mismatch";
    case ErrorCode::kNonCoprimeRoot: return "non-coprime-root";
    case ErrorCode::kConfigInconsistency: return "config-inconsistency";
    case ErrorCode::kDegenerateSigma: return "degenerate-sigma";
    case ErrorCode::kTapeMismatch: return "tape-mismatch";
    case ErrorCode::kNonScalarLoss: return "non-scalar-loss";
    case ErrorCode::kTapeReused: return "tape-reused";
    case ErrorCode::kDegenerateWeights: return "degenerate-weights";
    case ErrorCode::kUnsupportedK: return "unsupported-k";
    case ErrorCode::kNonFiniteLoss: return "non-finite-loss";
    case ErrorCode::kConfig: return "config-error";
    case ErrorCode::kIo: return "io-error";
  }
  return "unknown";
}

}  // namespace pnshape
