#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace triage {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value violates a documented invariant (probability vector, threshold, spec).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A binary or text input file is malformed.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A run configuration or dataset manifest is unusable.
class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class BackendFailure {
  shape_mismatch,
  process_failure,
  timeout,
  cache_miss,
  protocol,
  model_format,
};

const char* to_string(BackendFailure failure) noexcept;

/// Classifier backend failure. Carries the failure class and, for batch
/// calls, the index of the element that aborted the batch.
class BackendError : public Error {
 public:
  BackendError(BackendFailure failure, const std::string& message,
               std::optional<std::size_t> batch_index = std::nullopt);

  BackendFailure failure() const noexcept { return failure_; }
  std::optional<std::size_t> batch_index() const noexcept { return batch_index_; }

 private:
  BackendFailure failure_;
  std::optional<std::size_t> batch_index_;
};

}  // namespace triage
