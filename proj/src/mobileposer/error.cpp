#include "mobileposer/error.hpp"

namespace mobileposer {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUsage: return "usage";
    case ErrorCode::kParse: return "parse_error";
    case ErrorCode::kInvariantViolation: return "invariant_violation";
    case ErrorCode::kDegenerateInput: return "degenerate_input";
    case ErrorCode::kNoSkin: return "no_skin";
    case ErrorCode::kMissingReading: return "missing_reading";
    case ErrorCode::kTooShort: return "too_short";
    case ErrorCode::kShapeMismatch: return "shape_mismatch";
    case ErrorCode::kHorizonTooLong: return "horizon_too_long";
    case ErrorCode::kNonFiniteGradient: return "non_finite_gradient";
    case ErrorCode::kTooNoisy: return "too_noisy";
    case ErrorCode::kLengthMismatch: return "length_mismatch";
    case ErrorCode::kChannelMissing: return "channel_missing";
    case ErrorCode::kDimMismatch: return "dim_mismatch";
    case ErrorCode::kManifestInvalid: return "manifest_invalid";
    case ErrorCode::kUncalibrated: return "uncalibrated";
    case ErrorCode::kProtocol: return "protocol";
    case ErrorCode::kIo: return "io_error";
    case ErrorCode::kVersionUnsupported: return "version_unsupported";
    case ErrorCode::kRuntime: return "runtime";
  }
  return "unknown";
}

}  // namespace mobileposer
