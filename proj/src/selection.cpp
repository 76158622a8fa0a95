#include "triage/selection.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

#include <fmt/format.h>

#include "triage/error.hpp"

namespace triage {

void ThresholdConfig::validate() const {
  if (!std::isfinite(tau_low) || tau_low < 0.0) {
    throw ValidationError(fmt::format("tau_low must be a finite value >= 0, got {}", tau_low));
  }
  if (!std::isfinite(tau_high) || tau_high < 0.0) {
    throw ValidationError(fmt::format("tau_high must be a finite value >= 0, got {}", tau_high));
  }
  if (!(tau_low < tau_high)) {
    throw ValidationError(
        fmt::format("tau_low ({}) must be below tau_high ({})", tau_low, tau_high));
  }
}

SampleIndex::SampleIndex(std::span<const Sample> samples) {
  for (const Sample& s : samples) {
    if (!by_id_.emplace(s.id, &s).second) {
      throw ValidationError(fmt::format("duplicate sample id '{}'", s.id));
    }
    labels_.emplace(s.id, s.label);
  }
}

const Sample& SampleIndex::at(std::string_view id) const {
  const auto it = by_id_.find(id);
  if (it == by_id_.end()) throw ValidationError(fmt::format("unmatched sample_id '{}'", id));
  return *it->second;
}

std::optional<double> ErrorSet::ratio() const {
  if (attempts == 0) return std::nullopt;
  return static_cast<double>(entries.size()) / static_cast<double>(attempts);
}

std::string transformed_query_id(std::string_view sample_id, TransformKind kind) {
  return fmt::format("{}|{}", sample_id, to_string(kind));
}

namespace {

ClassIndex label_of(const LabelMap& labels, std::string_view id) {
  const auto it = labels.find(id);
  if (it == labels.end()) throw ValidationError(fmt::format("unmatched sample_id '{}'", id));
  return it->second;
}

void check_threshold(double tau, const char* name) {
  if (!std::isfinite(tau) || tau < 0.0) {
    throw ValidationError(fmt::format("{} must be a finite value >= 0, got {}", name, tau));
  }
}

template <class T>
void sort_by_id(std::vector<T>& items) {
  std::sort(items.begin(), items.end(),
            [](const T& a, const T& b) { return a.sample_id < b.sample_id; });
}

// Runs fn(i) for i in [0, n) across `workers` threads, preserving index slots.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> failures(workers);
  {
    std::vector<std::jthread> threads;
    for (std::size_t w = 0; w < workers; ++w) {
      threads.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += workers) fn(i);
        } catch (...) {
          failures[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
}

}  // namespace

GenerationCandidateSet build_candidates(std::span<const PredictionRecord> records,
                                        const LabelMap& labels, double tau_high) {
  check_threshold(tau_high, "tau_high");
  GenerationCandidateSet set{tau_high, {}};
  for (const PredictionRecord& r : records) {
    const ClassIndex y = label_of(labels, r.sample_id);
    if (r.shannon.value > tau_high && y == r.predicted_label) {
      set.members.push_back(Candidate{r.sample_id, y, r.shannon});
    }
  }
  sort_by_id(set.members);
  return set;
}

FlagSet detect(std::span<const PredictionRecord> records, const LabelMap& labels, double tau_low) {
  check_threshold(tau_low, "tau_low");
  FlagSet set{tau_low, {}};
  for (const PredictionRecord& r : records) {
    const ClassIndex y = label_of(labels, r.sample_id);
    if (r.shannon.value < tau_low && y != r.predicted_label) {
      set.entries.push_back(FlagEntry{r.sample_id, y, r.predicted_label, r.shannon});
    }
  }
  sort_by_id(set.entries);
  return set;
}

std::vector<ClassIndex> predict_transformed(std::span<const TransformTask> tasks,
                                            const Classifier& classifier,
                                            const SampleIndex& samples, std::size_t workers) {
  std::vector<const Sample*> sources(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) sources[i] = &samples.at(tasks[i].sample_id);

  std::vector<ImageTensor> images(tasks.size());
  parallel_for(tasks.size(), workers, [&](std::size_t i) {
    images[i] = apply_transform(sources[i]->image, tasks[i].transform);
  });

  std::vector<std::string> ids(tasks.size());
  std::vector<Query> queries(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    ids[i] = transformed_query_id(tasks[i].sample_id, tasks[i].transform.kind());
    queries[i] = Query{ids[i], &images[i]};
  }

  std::vector<PredictionVector> predictions;
  try {
    predictions = predict_all(classifier, queries, workers);
  } catch (const BackendError& e) {
    const std::string where =
        e.batch_index() ? fmt::format(" (sample '{}')", tasks[*e.batch_index()].sample_id) : "";
    throw BackendError(e.failure(), e.what() + where, e.batch_index());
  }
  std::vector<ClassIndex> labels(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) labels[i] = argmax_label(predictions[i]);
  return labels;
}

namespace {

std::vector<TransformTask> draw_tasks(std::span<const Candidate> members,
                                      const TransformPolicy& policy, const SampleIndex& samples) {
  std::vector<TransformTask> tasks;
  tasks.reserve(members.size());
  for (const Candidate& c : members) {
    const Sample& s = samples.at(c.sample_id);
    tasks.push_back(
        TransformTask{c.sample_id, choice(policy, draw_index_for(c.sample_id), s.image.shape())});
  }
  return tasks;
}

}  // namespace

ErrorSet generate(const GenerationCandidateSet& candidates, const TransformPolicy& policy,
                  const Classifier& classifier, const SampleIndex& samples, std::size_t workers) {
  policy.validate();
  const auto tasks = draw_tasks(candidates.members, policy, samples);
  const auto predicted = predict_transformed(tasks, classifier, samples, workers);

  ErrorSet errors;
  errors.attempts = tasks.size();
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const Candidate& c = candidates.members[i];
    if (predicted[i] != c.label) {
      errors.entries.push_back(ErrorEntry{c.sample_id, tasks[i].transform, predicted[i], c.label,
                                          transformed_query_id(c.sample_id,
                                                               tasks[i].transform.kind())});
    }
  }
  return errors;
}

std::vector<SweepPoint> threshold_sweep(std::span<const PredictionRecord> records,
                                        const SampleIndex& samples, std::span<const double> taus,
                                        const TransformPolicy& policy,
                                        const Classifier& classifier, std::size_t workers) {
  for (std::size_t i = 1; i < taus.size(); ++i) {
    if (!(taus[i] > taus[i - 1])) {
      throw ValidationError(fmt::format("sweep thresholds must be strictly increasing ({} after {})",
                                        taus[i], taus[i - 1]));
    }
  }
  std::vector<SweepPoint> points;
  if (taus.empty()) return points;

  const auto widest = build_candidates(records, samples.labels(), taus.front());
  const auto tasks = draw_tasks(widest.members, policy, samples);
  const auto predicted = predict_transformed(tasks, classifier, samples, workers);

  for (double tau : taus) {
    check_threshold(tau, "sweep threshold");
    SweepPoint point{tau, 0, 0, std::nullopt};
    for (std::size_t i = 0; i < widest.members.size(); ++i) {
      const Candidate& c = widest.members[i];
      if (!(c.shannon.value > tau)) continue;
      ++point.attempts;
      if (predicted[i] != c.label) ++point.errors;
    }
    if (point.attempts > 0) {
      point.ratio = static_cast<double>(point.errors) / static_cast<double>(point.attempts);
    }
    points.push_back(point);
  }
  return points;
}

}  // namespace triage
