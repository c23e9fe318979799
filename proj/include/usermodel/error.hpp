#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace usermodel {

enum class ErrorCode {
  kInvalidArgument,
  kInvalidConfig,
  kContextOverflow,
  kInvalidTap,
  kEmptyInput,
  kStratification,
  kDegenerateTraining,
  kUndefinedClass,
  kFingerprintMismatch,
  kMalformedFile,
  kUnsupportedVersion,
  kIo,
  kMissingProbe,
  kZeroNorm,
  kParse,
  kAnnotation,
  kCoverage,
  kCredential,
  kNetwork,
  kFixtureMiss,
  kSessionNotFound,
  kForbidden,
  kNothingToRegenerate,
  kServiceUnavailable,
};

std::string_view error_code_name(ErrorCode code);

// All library failures are reported through this type; the code is stable
// and is what the REST layer and the CLI map onto status codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace usermodel
