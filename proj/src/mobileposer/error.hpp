#pragma once

#include <stdexcept>
#include <string>

namespace mobileposer {

// Stable numeric values: these are returned verbatim through the C API.
enum class ErrorCode : int {
  kUsage = 1,
  kParse = 2,
  kInvariantViolation = 3,
  kDegenerateInput = 4,
  kNoSkin = 5,
  kMissingReading = 6,
  kTooShort = 7,
  kShapeMismatch = 8,
  kHorizonTooLong = 9,
  kNonFiniteGradient = 10,
  kTooNoisy = 11,
  kLengthMismatch = 12,
  kChannelMissing = 13,
  kDimMismatch = 14,
  kManifestInvalid = 15,
  kUncalibrated = 16,
  kProtocol = 17,
  kIo = 18,
  kVersionUnsupported = 19,
  kRuntime = 20,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace mobileposer
