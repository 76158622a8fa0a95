#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "triage/classifier.hpp"
#include "triage/entropy.hpp"
#include "triage/image.hpp"
#include "triage/transforms.hpp"

namespace triage {

/// Entropy thresholds in nats. Comparisons are strict: a sample sitting
/// exactly on a threshold is in neither set.
struct ThresholdConfig {
  double tau_low = 0.1;
  double tau_high = 0.4;

  /// Both nonnegative and finite; tau_low < tau_high.
  void validate() const;
  friend bool operator==(const ThresholdConfig&, const ThresholdConfig&) = default;
};

using LabelMap = std::map<std::string, ClassIndex, std::less<>>;

/// Id-keyed view over samples that must outlive it.
class SampleIndex {
 public:
  explicit SampleIndex(std::span<const Sample> samples);

  /// Throws ValidationError naming the id when it is unknown.
  const Sample& at(std::string_view id) const;
  const LabelMap& labels() const noexcept { return labels_; }
  std::size_t size() const noexcept { return by_id_.size(); }

 private:
  std::map<std::string, const Sample*, std::less<>> by_id_;
  LabelMap labels_;
};

struct Candidate {
  std::string sample_id;
  ClassIndex label = 0;
  ShannonIndex shannon;

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

/// The set G: correctly predicted samples with entropy above tau_high,
/// ascending by sample id.
struct GenerationCandidateSet {
  double tau_high = 0.0;
  std::vector<Candidate> members;
};

struct ErrorEntry {
  std::string sample_id;
  TransformSpec transform;
  ClassIndex transformed_label = 0;
  ClassIndex label = 0;
  std::string query_id;

  friend bool operator==(const ErrorEntry&, const ErrorEntry&) = default;
};

/// Transformed candidates the classifier got wrong, ascending by sample id,
/// plus the number of transformed inputs tried.
struct ErrorSet {
  std::vector<ErrorEntry> entries;
  std::size_t attempts = 0;

  /// errors / attempts, or empty when nothing was attempted.
  std::optional<double> ratio() const;
};

struct FlagEntry {
  std::string sample_id;
  ClassIndex label = 0;
  ClassIndex predicted = 0;
  ShannonIndex shannon;

  friend bool operator==(const FlagEntry&, const FlagEntry&) = default;
};

/// The set F: confident mispredictions (entropy below tau_low, label differs
/// from prediction), ascending by sample id.
struct FlagSet {
  double tau_low = 0.0;
  std::vector<FlagEntry> entries;
};

/// Classifier query id for a transformed sample: "{sample_id}|{kind}".
std::string transformed_query_id(std::string_view sample_id, TransformKind kind);

GenerationCandidateSet build_candidates(std::span<const PredictionRecord> records,
                                        const LabelMap& labels, double tau_high);

FlagSet detect(std::span<const PredictionRecord> records, const LabelMap& labels, double tau_low);

/// One (sample, transform) pair to evaluate.
struct TransformTask {
  std::string sample_id;
  TransformSpec transform;
};

/// Applies every task's transform and returns the classifier's predicted
/// label for each, in task order. Work fans out over `workers` threads.
std::vector<ClassIndex> predict_transformed(std::span<const TransformTask> tasks,
                                            const Classifier& classifier,
                                            const SampleIndex& samples, std::size_t workers);

/// Draws one transform per candidate via `choice`, keyed by the sample's id
/// so the draw does not depend on which other samples are present. A
/// transformed input is an error when its predicted label differs from the
/// ground truth (candidates are correctly predicted, so this is the same as
/// differing from the original prediction).
ErrorSet generate(const GenerationCandidateSet& candidates, const TransformPolicy& policy,
                  const Classifier& classifier, const SampleIndex& samples,
                  std::size_t workers = 1);

struct SweepPoint {
  double tau = 0.0;
  std::size_t attempts = 0;
  std::size_t errors = 0;
  std::optional<double> ratio;
};

/// Error ratio of generate() at each tau_high. `taus` must be strictly
/// increasing. Candidate sets are nested, so each sample is transformed and
/// classified once; its outcome is shared by every threshold it passes.
std::vector<SweepPoint> threshold_sweep(std::span<const PredictionRecord> records,
                                        const SampleIndex& samples, std::span<const double> taus,
                                        const TransformPolicy& policy,
                                        const Classifier& classifier, std::size_t workers = 1);

}  // namespace triage
