#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "triage/report.hpp"
#include "triage/selection.hpp"
#include "triage/serialize.hpp"
#include "triage/transforms.hpp"

namespace triage::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitBackend = 3;

enum class Mode { scan, generate, detect, matrix, sweep, replay };

const char* to_string(Mode mode) noexcept;

struct BackendConfig {
  std::string kind;  // "builtin", "cache" or "external"
  std::filesystem::path path;
  std::vector<std::string> command;
  double timeout_seconds = 30.0;

  /// "builtin:PATH", "cache:PATH" or "external:CMD ARG...".
  static BackendConfig parse(const std::string& descriptor);
  friend bool operator==(const BackendConfig&, const BackendConfig&) = default;
};

/// Everything a run depends on. Serialized into the output directory as
/// config.json.
struct RunConfig {
  std::filesystem::path dataset;
  std::vector<std::string> splits{"test"};
  BackendConfig backend;
  ThresholdConfig thresholds;
  std::vector<double> taus;
  std::vector<std::string> slices{"<0.001", ">0.4"};
  TransformPolicy policy;
  std::size_t workers = 1;
  std::filesystem::path out;
  std::size_t error_previews = 16;
  std::string timestamp;

  /// Throws ConfigError/ValidationError when the config cannot drive `mode`.
  void validate(Mode mode) const;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

Json to_json(const RunConfig& config);
/// Relative paths resolve against `base`.
RunConfig run_config_from_json(const Json& j, const std::filesystem::path& base);
RunConfig load_run_config(const std::filesystem::path& path);

/// Command-line values that win over the config file.
struct Overrides {
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> dataset;
  std::optional<std::vector<std::string>> splits;
  std::optional<double> tau_low;
  std::optional<double> tau_high;
  std::optional<std::vector<double>> taus;
  std::optional<std::vector<std::string>> slices;
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<std::string>> transforms;
  std::optional<std::string> backend;
  std::optional<std::size_t> workers;
  std::optional<std::filesystem::path> out;
};

RunConfig resolve_config(const Overrides& overrides);

/// Runs one subcommand. `args` excludes the program name. Returns the exit
/// status: 0 success, 2 configuration or validation error, 3 backend or
/// runtime failure.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace triage::cli
