#include "triage/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "triage/error.hpp"

namespace triage {

namespace {

// Sorting before summation makes the result independent of label order.
double sorted_sum(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  return std::accumulate(values.begin(), values.end(), 0.0);
}

}  // namespace

PredictionVector::PredictionVector(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.size() < 2) {
    throw ValidationError(
        fmt::format("prediction vector needs at least 2 classes, got {}", probs_.size()));
  }
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    const double p = probs_[i];
    if (!std::isfinite(p)) {
      throw ValidationError(fmt::format("probability at index {} is not finite", i));
    }
    if (p < 0.0) {
      throw ValidationError(fmt::format("probability at index {} is negative ({})", i, p));
    }
    if (p > 1.0 + kNormTolerance) {
      throw ValidationError(fmt::format("probability at index {} exceeds 1 ({})", i, p));
    }
  }
  const double total = sorted_sum(probs_);
  if (std::abs(total - 1.0) > kNormTolerance) {
    throw ValidationError(fmt::format(
        "probabilities sum to {} (tolerance {}); offending index {} holds the largest entry",
        total, kNormTolerance,
        std::distance(probs_.begin(), std::max_element(probs_.begin(), probs_.end()))));
  }
  // Vectors that already sum to 1 up to rounding are kept as given, so
  // normalization is idempotent.
  const double rounding = static_cast<double>(probs_.size()) * std::numeric_limits<double>::epsilon();
  if (std::abs(total - 1.0) > rounding) {
    for (double& p : probs_) p /= total;
  }
}

ShannonIndex shannon_index(const PredictionVector& probs) {
  std::vector<double> terms;
  terms.reserve(probs.size());
  for (double p : probs.probs()) {
    terms.push_back(p > 0.0 ? -p * std::log(p) : 0.0);
  }
  const double upper = std::log(static_cast<double>(probs.size()));
  return ShannonIndex{std::clamp(sorted_sum(std::move(terms)), 0.0, upper)};
}

ShannonIndex shannon_index(std::span<const double> probs) {
  return shannon_index(PredictionVector(std::vector<double>(probs.begin(), probs.end())));
}

ClassIndex argmax_label(const PredictionVector& probs) {
  const auto values = probs.probs();
  // max_element returns the first maximum.
  return static_cast<ClassIndex>(
      std::distance(values.begin(), std::max_element(values.begin(), values.end())));
}

PredictionRecord make_record(std::string sample_id, PredictionVector probs) {
  const ClassIndex label = argmax_label(probs);
  const ShannonIndex h = shannon_index(probs);
  return PredictionRecord{std::move(sample_id), std::move(probs), label, h};
}

std::vector<PredictionRecord> batch_records(std::span<const std::string> ids,
                                            std::span<const PredictionVector> vectors) {
  if (ids.size() != vectors.size()) {
    throw ValidationError(fmt::format("batch_records got {} ids but {} vectors", ids.size(),
                                      vectors.size()));
  }
  std::vector<PredictionRecord> records;
  records.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (vectors[i].size() != vectors.front().size()) {
      throw ValidationError(fmt::format(
          "inconsistent class count: vector {} has {} classes, vector 0 has {}", i,
          vectors[i].size(), vectors.front().size()));
    }
    records.push_back(make_record(ids[i], vectors[i]));
  }
  return records;
}

}  // namespace triage
