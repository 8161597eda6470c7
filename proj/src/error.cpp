#include "dexrank/error.hpp"

#include <iostream>
#include <mutex>
#include <utility>

namespace dexrank {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kZeroRow: return "ZeroRow";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kDuplicateId: return "DuplicateId";
    case ErrorCode::kNotNormalized: return "NotNormalized";
    case ErrorCode::kEmptySubset: return "EmptySubset";
    case ErrorCode::kInconsistentEnsemble: return "InconsistentEnsemble";
    case ErrorCode::kInvalidTracklets: return "InvalidTracklets";
    case ErrorCode::kInvalidParams: return "InvalidParams";
    case ErrorCode::kGalleryTooSmall: return "GalleryTooSmall";
    case ErrorCode::kNoRelevant: return "NoRelevant";
    case ErrorCode::kEmptyEval: return "EmptyEval";
    case ErrorCode::kInvalidSpec: return "InvalidSpec";
    case ErrorCode::kInvalidMetadata: return "InvalidMetadata";
    case ErrorCode::kMalformedHeader: return "MalformedHeader";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kStageOrderError: return "StageOrderError";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code) {}

namespace {

std::mutex& handler_mutex() {
  static std::mutex m;
  return m;
}

WarningHandler& handler_slot() {
  static WarningHandler handler = [](std::string_view msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return handler;
}

}  // namespace

WarningHandler set_warning_handler(WarningHandler handler) {
  std::lock_guard lock(handler_mutex());
  return std::exchange(handler_slot(), std::move(handler));
}

void warn(std::string_view message) {
  std::lock_guard lock(handler_mutex());
  if (handler_slot()) handler_slot()(message);
}

}  // namespace dexrank
