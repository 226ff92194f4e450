#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pnshape {

enum class ErrorCode {
  kInvalidParameter,
  kZeroPowerSignal,
  kEmptyInput,
  kInvalidLength,
  kLengthMismatch,
  kSizeMismatch,
  kNonCoprimeRoot,
  kConfigInconsistency,
  kDegenerateSigma,
  kTapeMismatch,
  kNonScalarLoss,
  kTapeReused,
  kDegenerateWeights,
  kUnsupportedK,
  kNonFiniteLoss,
  kConfig,
  kIo,
};

std::string_view to_string(ErrorCode code);

/// Exception carrying a machine-checkable error category.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace pnshape
