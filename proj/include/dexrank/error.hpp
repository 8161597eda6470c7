#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dexrank {

enum class ErrorCode {
  kZeroRow,
  kNonFinite,
  kDimensionMismatch,
  kDuplicateId,
  kNotNormalized,
  kEmptySubset,
  kInconsistentEnsemble,
  kInvalidTracklets,
  kInvalidParams,
  kGalleryTooSmall,
  kNoRelevant,
  kEmptyEval,
  kInvalidSpec,
  kInvalidMetadata,
  kMalformedHeader,
  kLengthMismatch,
  kStageOrderError,
  kInvalidConfig,
  kIoError,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library; callers switch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

  // IO failures map to exit code 2, everything else is a validation error.
  bool is_io() const noexcept { return code_ == ErrorCode::kIoError; }

 private:
  ErrorCode code_;
};

// Non-fatal conditions (k clamped, disconnected graph node, query without
// relevant items, ...). Defaults to stderr.
using WarningHandler = std::function<void(std::string_view)>;

WarningHandler set_warning_handler(WarningHandler handler);
void warn(std::string_view message);

}  // namespace dexrank
