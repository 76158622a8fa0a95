#include "triage/error.hpp"

namespace triage {

const char* to_string(BackendFailure failure) noexcept {
  switch (failure) {
    case BackendFailure::shape_mismatch: return "shape mismatch";
    case BackendFailure::process_failure: return "external process failure";
    case BackendFailure::timeout: return "external process timeout";
    case BackendFailure::cache_miss: return "cache miss";
    case BackendFailure::protocol: return "protocol error";
    case BackendFailure::model_format: return "model format error";
  }
  return "unknown backend failure";
}

BackendError::BackendError(BackendFailure failure, const std::string& message,
                           std::optional<std::size_t> batch_index)
    : Error(message), failure_(failure), batch_index_(batch_index) {}

}  // namespace triage
