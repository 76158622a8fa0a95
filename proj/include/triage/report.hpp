#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "triage/selection.hpp"
#include "triage/serialize.hpp"

namespace triage {

/// Predicate over entropy values: `s < t`, `s > t`, or every sample.
struct EntropySlice {
  enum class Op { less, greater, all };

  Op op = Op::all;
  double threshold = 0.0;

  bool contains(double shannon) const noexcept;
  /// "s_x < 0.001", "s_x > 0.4", or "all".
  std::string label() const;

  /// Accepts "<0.001", ">0.4", "all" (whitespace and a leading "s" or "s_x"
  /// are tolerated).
  static EntropySlice parse(std::string_view text);

  friend bool operator==(const EntropySlice&, const EntropySlice&) = default;
};

/// The slice pair of the published error-ratio table.
std::vector<EntropySlice> default_slices();

struct MatrixCell {
  std::string slice;
  TransformKind kind = TransformKind::pan;
  std::size_t attempts = 0;
  std::size_t errors = 0;
  /// Empty when the slice had no members.
  std::optional<double> ratio;

  friend bool operator==(const MatrixCell&, const MatrixCell&) = default;
};

struct GalleryItem {
  std::string sample_id;
  std::string source;  // "flag" or "error"
  ClassIndex label = 0;
  ClassIndex prediction = 0;
  std::string transform;  // kind name for error previews, empty for flags
  std::string png_base64;

  std::string caption() const;
  friend bool operator==(const GalleryItem&, const GalleryItem&) = default;
};

struct RunMetadata {
  std::uint64_t seed = 0;
  Json policy = Json::object();
  Json thresholds = Json::object();
  std::string classifier;
  /// Left empty unless the caller supplies one, so reruns stay byte-identical.
  std::string timestamp;

  friend bool operator==(const RunMetadata&, const RunMetadata&) = default;
};

struct TriageReport {
  static constexpr int kVersion = 1;

  std::string dataset;
  std::size_t sample_count = 0;
  std::size_t correct_count = 0;
  std::vector<std::string> slices;
  std::vector<TransformKind> kinds;
  std::vector<MatrixCell> cells;  // slice-major, then kind
  std::size_t flag_count = 0;
  std::vector<FlagEntry> flag_previews;
  std::size_t error_count = 0;
  std::vector<ErrorEntry> error_previews;
  std::vector<GalleryItem> gallery;
  RunMetadata metadata;

  const MatrixCell* cell(std::string_view slice, TransformKind kind) const;
  friend bool operator==(const TriageReport&, const TriageReport&) = default;
};

/// Matrix mode: every enabled transform kind is applied to every correctly
/// predicted member of every slice. Each cell's ratio is errors / attempts.
TriageReport build_matrix_report(std::string dataset, std::span<const PredictionRecord> records,
                                 const SampleIndex& samples, std::span<const EntropySlice> slices,
                                 const Classifier& classifier, const TransformPolicy& policy,
                                 std::size_t workers = 1);

/// Adds every flag to the report and the gallery.
void attach_flags(TriageReport& report, const FlagSet& flags, const SampleIndex& samples);

/// Adds up to `preview_limit` errors (in set order) to the report and the
/// gallery, rendering each transformed image.
void attach_errors(TriageReport& report, const ErrorSet& errors, const SampleIndex& samples,
                   std::size_t preview_limit);

enum class RenderFormat { json, markdown, html_gallery };

Json report_to_json(const TriageReport& report);
TriageReport report_from_json(const Json& j);

std::string render(const TriageReport& report, RenderFormat format);

/// Column title used in tables, e.g. "2D rotation".
const char* display_name(TransformKind kind) noexcept;

}  // namespace triage
