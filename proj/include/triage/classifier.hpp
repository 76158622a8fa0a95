#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "triage/entropy.hpp"
#include "triage/image.hpp"

namespace triage {

enum class BackendKind { builtin_softmax, external_process, prediction_cache };

const char* to_string(BackendKind kind) noexcept;

/// One classifier input. `id` is the sample id, or for transformed inputs
/// the sample id followed by "|" and the transform kind.
struct Query {
  std::string_view id;
  const ImageTensor* image = nullptr;
};

/// Blackbox "image in, probability vector out" interface.
///
/// Implementations whose `concurrent()` is true may be called from several
/// threads at once. The external-process backend is not; it serializes
/// requests internally, and parallel callers should open several handles.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual BackendKind kind() const noexcept = 0;
  virtual std::size_t class_count() const noexcept = 0;
  /// Empty when the backend does not look at pixels (prediction cache).
  virtual std::optional<ImageShape> input_shape() const noexcept = 0;
  virtual bool concurrent() const noexcept = 0;
  virtual std::string descriptor() const = 0;

  PredictionVector predict(std::string_view id, const ImageTensor& image) const;

  /// Order-preserving. The first failing element aborts the batch; the thrown
  /// BackendError carries its index.
  virtual std::vector<PredictionVector> predict_batch(std::span<const Query> queries) const = 0;

 protected:
  void check_input(const Query& query, std::size_t index) const;
};

/// Runs predict_batch split across `workers` threads when the backend allows
/// it. Results do not depend on the worker count.
std::vector<PredictionVector> predict_all(const Classifier& classifier,
                                          std::span<const Query> queries, std::size_t workers);

// -- builtin dense softmax model ---------------------------------------------

enum class Activation : std::uint8_t { none = 0, relu = 1 };

/// Fully connected layer computing activation(weights * x + biases).
struct DenseLayer {
  std::uint32_t rows = 0;  // output width
  std::uint32_t cols = 0;  // input width
  Activation activation = Activation::none;
  std::vector<float> weights;  // row-major rows x cols
  std::vector<float> biases;   // rows

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Stack of dense layers followed by an implied softmax.
class BuiltinSoftmaxModel {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  /// Validates the dimension chain and rejects non-finite parameters.
  explicit BuiltinSoftmaxModel(std::vector<DenseLayer> layers);

  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::size_t input_width() const noexcept { return layers_.front().cols; }
  std::size_t class_count() const noexcept { return layers_.back().rows; }

  /// Final-layer pre-softmax activations.
  std::vector<double> logits(std::span<const double> input) const;
  PredictionVector forward(std::span<const double> input) const;

  friend bool operator==(const BuiltinSoftmaxModel&, const BuiltinSoftmaxModel&) = default;

 private:
  std::vector<DenseLayer> layers_;
};

/// Numerically stable softmax (max subtracted first).
std::vector<double> softmax(std::span<const double> logits);

/// "CMLP" magic, u32 version, u32 layer count, then per layer u32 rows,
/// u32 cols, u8 activation, float32 weights, float32 biases; all little-endian.
std::vector<std::uint8_t> encode_model(const BuiltinSoftmaxModel& model);
BuiltinSoftmaxModel decode_model(std::span<const std::uint8_t> bytes);
void save_builtin_model(const BuiltinSoftmaxModel& model, const std::filesystem::path& path);
BuiltinSoftmaxModel load_builtin_model(const std::filesystem::path& path);

class BuiltinClassifier final : public Classifier {
 public:
  BuiltinClassifier(BuiltinSoftmaxModel model, ImageShape shape, std::string source = {});

  BackendKind kind() const noexcept override { return BackendKind::builtin_softmax; }
  std::size_t class_count() const noexcept override { return model_.class_count(); }
  std::optional<ImageShape> input_shape() const noexcept override { return shape_; }
  bool concurrent() const noexcept override { return true; }
  std::string descriptor() const override;
  std::vector<PredictionVector> predict_batch(std::span<const Query> queries) const override;

  const BuiltinSoftmaxModel& model() const noexcept { return model_; }

 private:
  BuiltinSoftmaxModel model_;
  ImageShape shape_;
  std::string source_;
};

// -- prediction cache ---------------------------------------------------------

class PredictionCache {
 public:
  explicit PredictionCache(std::size_t class_count);

  std::size_t class_count() const noexcept { return class_count_; }
  std::size_t size() const noexcept { return entries_.size(); }

  /// Replaces any existing entry.
  void insert(std::string id, PredictionVector probs);
  const PredictionVector* find(std::string_view id) const;
  const std::map<std::string, PredictionVector, std::less<>>& entries() const noexcept {
    return entries_;
  }

 private:
  std::size_t class_count_;
  std::map<std::string, PredictionVector, std::less<>> entries_;
};

/// CSV with header `sample_id,p0,...,p{N-1}`.
PredictionCache read_prediction_cache(const std::filesystem::path& path);
/// Rows are written in the given order; values use shortest round-trip form.
void write_prediction_csv(const std::filesystem::path& path,
                          std::span<const PredictionRecord> records);
void write_prediction_cache(const std::filesystem::path& path, const PredictionCache& cache);

class CacheClassifier final : public Classifier {
 public:
  explicit CacheClassifier(PredictionCache cache, std::string source = {});

  BackendKind kind() const noexcept override { return BackendKind::prediction_cache; }
  std::size_t class_count() const noexcept override { return cache_.class_count(); }
  std::optional<ImageShape> input_shape() const noexcept override { return std::nullopt; }
  bool concurrent() const noexcept override { return true; }
  std::string descriptor() const override;
  std::vector<PredictionVector> predict_batch(std::span<const Query> queries) const override;

 private:
  PredictionCache cache_;
  std::string source_;
};

// -- external process ---------------------------------------------------------

struct ExternalProcessOptions {
  std::vector<std::string> command;  // argv; command[0] is resolved via PATH
  std::size_t class_count = 0;
  ImageShape input_shape;
  std::chrono::milliseconds batch_timeout{30'000};
};

/// Talks line-delimited JSON with a child process over its stdin/stdout.
/// Request: {"id", "shape", "pixels"}; response: {"id", "probs"} or
/// {"id", "error"}. Requests are serialized through one mutex.
class ExternalProcessClassifier final : public Classifier {
 public:
  explicit ExternalProcessClassifier(ExternalProcessOptions options);
  ~ExternalProcessClassifier() override;

  ExternalProcessClassifier(const ExternalProcessClassifier&) = delete;
  ExternalProcessClassifier& operator=(const ExternalProcessClassifier&) = delete;

  BackendKind kind() const noexcept override { return BackendKind::external_process; }
  std::size_t class_count() const noexcept override { return options_.class_count; }
  std::optional<ImageShape> input_shape() const noexcept override { return options_.input_shape; }
  bool concurrent() const noexcept override { return false; }
  std::string descriptor() const override;
  std::vector<PredictionVector> predict_batch(std::span<const Query> queries) const override;

 private:
  struct Child;

  ExternalProcessOptions options_;
  mutable std::mutex mutex_;
  std::unique_ptr<Child> child_;
};

}  // namespace triage
