#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace triage {

using ClassIndex = std::size_t;

/// Largest accepted deviation of sum(probs) from 1 before a vector is rejected.
inline constexpr double kNormTolerance = 1e-4;

/// A validated probability distribution over N >= 2 classes.
///
/// Construction rejects negative or non-finite entries and sums farther than
/// kNormTolerance from 1, then divides by the sum unless it already equals 1
/// up to rounding, so constructing from a stored vector returns it unchanged.
class PredictionVector {
 public:
  explicit PredictionVector(std::vector<double> probs);

  std::span<const double> probs() const noexcept { return probs_; }
  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }

  friend bool operator==(const PredictionVector&, const PredictionVector&) = default;

 private:
  std::vector<double> probs_;
};

/// Shannon entropy of a prediction in nats.
struct ShannonIndex {
  double value = 0.0;

  friend auto operator<=>(const ShannonIndex&, const ShannonIndex&) = default;
};

/// -sum(p_i * ln p_i) with 0 * ln 0 = 0. Terms are accumulated in sorted
/// order, so the result does not depend on label order.
ShannonIndex shannon_index(const PredictionVector& probs);

/// Validates `probs` as a PredictionVector first.
ShannonIndex shannon_index(std::span<const double> probs);

/// Index of the largest probability; the lowest index wins ties.
ClassIndex argmax_label(const PredictionVector& probs);

struct PredictionRecord {
  std::string sample_id;
  PredictionVector probs;
  ClassIndex predicted_label;
  ShannonIndex shannon;

  friend bool operator==(const PredictionRecord&, const PredictionRecord&) = default;
};

PredictionRecord make_record(std::string sample_id, PredictionVector probs);

/// One record per (id, vector) pair, in input order. All vectors must share
/// one class count.
std::vector<PredictionRecord> batch_records(std::span<const std::string> ids,
                                            std::span<const PredictionVector> vectors);

}  // namespace triage
