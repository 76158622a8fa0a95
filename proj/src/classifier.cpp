#include "triage/classifier.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <iterator>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "triage/error.hpp"

namespace triage {

const char* to_string(BackendKind kind) noexcept {
  switch (kind) {
    case BackendKind::builtin_softmax: return "builtin-softmax";
    case BackendKind::external_process: return "external-process";
    case BackendKind::prediction_cache: return "prediction-cache";
  }
  return "unknown";
}

PredictionVector Classifier::predict(std::string_view id, const ImageTensor& image) const {
  const Query query{id, &image};
  return std::move(predict_batch(std::span(&query, 1)).front());
}

void Classifier::check_input(const Query& query, std::size_t index) const {
  const auto shape = input_shape();
  if (!shape) return;
  if (query.image == nullptr || query.image->shape() != *shape) {
    throw BackendError(
        BackendFailure::shape_mismatch,
        fmt::format("input '{}' has shape {}, classifier expects {}", query.id,
                    query.image ? to_string(query.image->shape()) : std::string("none"),
                    to_string(*shape)),
        index);
  }
}

std::vector<PredictionVector> predict_all(const Classifier& classifier,
                                          std::span<const Query> queries, std::size_t workers) {
  workers = std::max<std::size_t>(1, std::min(workers, queries.size()));
  if (workers == 1 || !classifier.concurrent()) return classifier.predict_batch(queries);

  const std::size_t chunk = (queries.size() + workers - 1) / workers;
  std::vector<std::vector<PredictionVector>> parts(workers);
  std::vector<std::exception_ptr> failures(workers);
  {
    std::vector<std::jthread> threads;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = std::min(queries.size(), w * chunk);
      const std::size_t end = std::min(queries.size(), begin + chunk);
      threads.emplace_back([&, w, begin, end] {
        try {
          parts[w] = classifier.predict_batch(queries.subspan(begin, end - begin));
        } catch (...) {
          failures[w] = std::current_exception();
        }
      });
    }
  }
  for (std::size_t w = 0; w < workers; ++w) {
    if (!failures[w]) continue;
    try {
      std::rethrow_exception(failures[w]);
    } catch (const BackendError& e) {
      const std::size_t offset = w * chunk;
      throw BackendError(e.failure(), e.what(),
                         e.batch_index() ? std::optional(*e.batch_index() + offset) : std::nullopt);
    }
  }
  std::vector<PredictionVector> out;
  out.reserve(queries.size());
  for (auto& part : parts) std::move(part.begin(), part.end(), std::back_inserter(out));
  return out;
}

// -- builtin model ------------------------------------------------------------

BuiltinSoftmaxModel::BuiltinSoftmaxModel(std::vector<DenseLayer> layers)
    : layers_(std::move(layers)) {
  if (layers_.empty()) {
    throw BackendError(BackendFailure::model_format, "model has no layers");
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const DenseLayer& layer = layers_[i];
    if (layer.rows == 0 || layer.cols == 0) {
      throw BackendError(BackendFailure::model_format,
                         fmt::format("layer {} has a zero dimension", i));
    }
    if (layer.weights.size() != std::size_t{layer.rows} * layer.cols ||
        layer.biases.size() != layer.rows) {
      throw BackendError(BackendFailure::model_format,
                         fmt::format("layer {} parameter count does not match {}x{}", i,
                                     layer.rows, layer.cols));
    }
    if (i > 0 && layer.cols != layers_[i - 1].rows) {
      throw BackendError(BackendFailure::model_format,
                         fmt::format("dimension chain break: layer {} expects {} inputs but "
                                     "layer {} produces {}",
                                     i, layer.cols, i - 1, layers_[i - 1].rows));
    }
    if (layer.activation != Activation::none && layer.activation != Activation::relu) {
      throw BackendError(BackendFailure::model_format,
                         fmt::format("layer {} has unknown activation {}", i,
                                     static_cast<int>(layer.activation)));
    }
    auto finite = [](float v) { return std::isfinite(v); };
    if (!std::all_of(layer.weights.begin(), layer.weights.end(), finite) ||
        !std::all_of(layer.biases.begin(), layer.biases.end(), finite)) {
      throw BackendError(BackendFailure::model_format,
                         fmt::format("layer {} contains non-finite parameters", i));
    }
  }
  if (class_count() < 2) {
    throw BackendError(BackendFailure::model_format, "final layer must have at least 2 outputs");
  }
}

std::vector<double> BuiltinSoftmaxModel::logits(std::span<const double> input) const {
  if (input.size() != input_width()) {
    throw BackendError(BackendFailure::shape_mismatch,
                       fmt::format("model expects {} inputs, got {}", input_width(),
                                   input.size()));
  }
  std::vector<double> current(input.begin(), input.end());
  std::vector<double> next;
  for (const DenseLayer& layer : layers_) {
    next.assign(layer.rows, 0.0);
    for (std::size_t r = 0; r < layer.rows; ++r) {
      const float* row = layer.weights.data() + r * layer.cols;
      double acc = layer.biases[r];
      for (std::size_t c = 0; c < layer.cols; ++c) acc += double{row[c]} * current[c];
      next[r] = (layer.activation == Activation::relu) ? std::max(acc, 0.0) : acc;
    }
    current.swap(next);
  }
  return current;
}

PredictionVector BuiltinSoftmaxModel::forward(std::span<const double> input) const {
  return PredictionVector(softmax(logits(input)));
}

std::vector<double> softmax(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

namespace {

constexpr std::array<std::uint8_t, 4> kModelMagic{'C', 'M', 'L', 'P'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

class ModelReader {
 public:
  explicit ModelReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::span<const std::uint8_t> take(std::size_t n) {
    if (bytes_.size() - pos_ < n) {
      throw BackendError(BackendFailure::model_format, "unexpected end of model file");
    }
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint32_t u32() {
    const auto b = take(4);
    return std::uint32_t{b[0]} | std::uint32_t{b[1]} << 8 | std::uint32_t{b[2]} << 16 |
           std::uint32_t{b[3]} << 24;
  }
  std::uint8_t u8() { return take(1)[0]; }
  std::vector<float> floats(std::size_t n) {
    if ((bytes_.size() - pos_) / 4 < n) {
      throw BackendError(BackendFailure::model_format, "unexpected end of model file");
    }
    std::vector<float> out(n);
    for (float& f : out) f = std::bit_cast<float>(u32());
    return out;
  }
  bool done() const noexcept { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_model(const BuiltinSoftmaxModel& model) {
  std::vector<std::uint8_t> out(kModelMagic.begin(), kModelMagic.end());
  put_u32(out, BuiltinSoftmaxModel::kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(model.layers().size()));
  for (const DenseLayer& layer : model.layers()) {
    put_u32(out, layer.rows);
    put_u32(out, layer.cols);
    out.push_back(static_cast<std::uint8_t>(layer.activation));
    for (float w : layer.weights) put_u32(out, std::bit_cast<std::uint32_t>(w));
    for (float b : layer.biases) put_u32(out, std::bit_cast<std::uint32_t>(b));
  }
  return out;
}

BuiltinSoftmaxModel decode_model(std::span<const std::uint8_t> bytes) {
  ModelReader reader(bytes);
  const auto magic = reader.take(4);
  if (!std::equal(magic.begin(), magic.end(), kModelMagic.begin())) {
    throw BackendError(BackendFailure::model_format, "model magic mismatch: expected \"CMLP\"");
  }
  const std::uint32_t version = reader.u32();
  if (version != BuiltinSoftmaxModel::kFormatVersion) {
    throw BackendError(BackendFailure::model_format,
                       fmt::format("unsupported model format version {}", version));
  }
  const std::uint32_t count = reader.u32();
  std::vector<DenseLayer> layers;
  for (std::uint32_t i = 0; i < count; ++i) {
    DenseLayer layer;
    layer.rows = reader.u32();
    layer.cols = reader.u32();
    layer.activation = static_cast<Activation>(reader.u8());
    layer.weights = reader.floats(std::size_t{layer.rows} * layer.cols);
    layer.biases = reader.floats(layer.rows);
    layers.push_back(std::move(layer));
  }
  if (!reader.done()) {
    throw BackendError(BackendFailure::model_format, "trailing bytes after last model layer");
  }
  return BuiltinSoftmaxModel(std::move(layers));
}

void save_builtin_model(const BuiltinSoftmaxModel& model, const std::filesystem::path& path) {
  const auto bytes = encode_model(model);
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(fmt::format("cannot write model file {}", path.string()));
}

BuiltinSoftmaxModel load_builtin_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError(fmt::format("cannot open model file {}", path.string()));
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_model(bytes);
}

BuiltinClassifier::BuiltinClassifier(BuiltinSoftmaxModel model, ImageShape shape,
                                     std::string source)
    : model_(std::move(model)), shape_(shape), source_(std::move(source)) {
  if (shape_.pixel_count() != model_.input_width()) {
    throw BackendError(BackendFailure::shape_mismatch,
                       fmt::format("model takes {} inputs but image shape {} has {} values",
                                   model_.input_width(), to_string(shape_),
                                   shape_.pixel_count()));
  }
}

std::string BuiltinClassifier::descriptor() const {
  std::string widths = std::to_string(model_.input_width());
  for (const auto& layer : model_.layers()) widths += "-" + std::to_string(layer.rows);
  return fmt::format("builtin-softmax:{} ({})", source_.empty() ? "<memory>" : source_, widths);
}

std::vector<PredictionVector> BuiltinClassifier::predict_batch(
    std::span<const Query> queries) const {
  std::vector<PredictionVector> out;
  out.reserve(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    check_input(queries[i], i);
    out.push_back(model_.forward(queries[i].image->pixels()));
  }
  return out;
}

// -- prediction cache ---------------------------------------------------------

PredictionCache::PredictionCache(std::size_t class_count) : class_count_(class_count) {
  if (class_count_ < 2) throw ValidationError("prediction cache needs at least 2 classes");
}

void PredictionCache::insert(std::string id, PredictionVector probs) {
  if (probs.size() != class_count_) {
    throw ValidationError(fmt::format("inconsistent class count: cache holds {} classes, '{}' has {}",
                                      class_count_, id, probs.size()));
  }
  entries_.insert_or_assign(std::move(id), std::move(probs));
}

const PredictionVector* PredictionCache::find(std::string_view id) const {
  const auto it = entries_.find(id);
  return it == entries_.end() ? nullptr : &it->second;
}

namespace {

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

}  // namespace

PredictionCache read_prediction_cache(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open prediction cache {}", path.string()));
  std::string line;
  if (!std::getline(in, line)) {
    throw ParseError(fmt::format("{}: missing header", path.string()));
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "sample_id") {
    throw ParseError(fmt::format("{}: header must be sample_id,p0,p1,...", path.string()));
  }
  for (std::size_t i = 1; i < header.size(); ++i) {
    if (header[i] != fmt::format("p{}", i - 1)) {
      throw ParseError(fmt::format("{}: header column {} should be p{}", path.string(), i, i - 1));
    }
  }
  PredictionCache cache(header.size() - 1);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw ParseError(fmt::format("{}:{}: expected {} fields, got {}", path.string(), line_no,
                                   header.size(), fields.size()));
    }
    std::vector<double> probs(fields.size() - 1);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      const auto field = fields[i];
      const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), probs[i - 1]);
      if (ec != std::errc{} || ptr != field.data() + field.size()) {
        throw ParseError(fmt::format("{}:{}: bad number '{}'", path.string(), line_no, field));
      }
    }
    try {
      cache.insert(std::string(fields[0]), PredictionVector(std::move(probs)));
    } catch (const ValidationError& e) {
      throw ParseError(fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
  }
  return cache;
}

namespace {

void write_csv_row(std::ostream& out, std::string_view id, const PredictionVector& probs) {
  out << id;
  for (double p : probs.probs()) out << ',' << fmt::format("{}", p);
  out << '\n';
}

void write_csv_header(std::ostream& out, std::size_t classes) {
  out << "sample_id";
  for (std::size_t i = 0; i < classes; ++i) out << ",p" << i;
  out << '\n';
}

}  // namespace

void write_prediction_csv(const std::filesystem::path& path,
                          std::span<const PredictionRecord> records) {
  std::ofstream out(path);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  write_csv_header(out, records.empty() ? 0 : records.front().probs.size());
  for (const auto& r : records) write_csv_row(out, r.sample_id, r.probs);
}

void write_prediction_cache(const std::filesystem::path& path, const PredictionCache& cache) {
  std::ofstream out(path);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  write_csv_header(out, cache.class_count());
  for (const auto& [id, probs] : cache.entries()) write_csv_row(out, id, probs);
}

CacheClassifier::CacheClassifier(PredictionCache cache, std::string source)
    : cache_(std::move(cache)), source_(std::move(source)) {}

std::string CacheClassifier::descriptor() const {
  return fmt::format("prediction-cache:{} ({} entries)", source_.empty() ? "<memory>" : source_,
                     cache_.size());
}

std::vector<PredictionVector> CacheClassifier::predict_batch(std::span<const Query> queries) const {
  std::vector<PredictionVector> out;
  out.reserve(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const PredictionVector* hit = cache_.find(queries[i].id);
    if (hit == nullptr) {
      throw BackendError(BackendFailure::cache_miss,
                         fmt::format("no prediction for '{}'", queries[i].id), i);
    }
    out.push_back(*hit);
  }
  return out;
}

}  // namespace triage
