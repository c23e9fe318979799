#include "usermodel/error.hpp"

namespace usermodel {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kInvalidConfig: return "invalid_config";
    case ErrorCode::kContextOverflow: return "context_overflow";
    case ErrorCode::kInvalidTap: return "invalid_tap";
    case ErrorCode::kEmptyInput: return "empty_input";
    case ErrorCode::kStratification: return "stratification";
    case ErrorCode::kDegenerateTraining: return "degenerate_training";
    case ErrorCode::kUndefinedClass: return "undefined_class";
    case ErrorCode::kFingerprintMismatch: return "fingerprint_mismatch";
    case ErrorCode::kMalformedFile: return "malformed_file";
    case ErrorCode::kUnsupportedVersion: return "unsupported_version";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kMissingProbe: return "missing_probe";
    case ErrorCode::kZeroNorm: return "zero_norm";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kAnnotation: return "annotation";
    case ErrorCode::kCoverage: return "coverage";
    case ErrorCode::kCredential: return "credential";
    case ErrorCode::kNetwork: return "network";
    case ErrorCode::kFixtureMiss: return "fixture_miss";
    case ErrorCode::kSessionNotFound: return "session_not_found";
    case ErrorCode::kForbidden: return "forbidden";
    case ErrorCode::kNothingToRegenerate: return "nothing_to_regenerate";
    case ErrorCode::kServiceUnavailable: return "service_unavailable";
  }
  return "unknown";
}

}  // namespace usermodel
