#include "fixtures.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "triage/dataset.hpp"
#include "triage/selection.hpp"

namespace triage::testing {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& prefix) {
  static std::mt19937_64 rng{std::random_device{}()};
  do {
    path_ = fs::temp_directory_path() / (prefix + "-" + std::to_string(rng()));
  } while (fs::exists(path_));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

namespace {

ImageTensor patterned_image(std::size_t seed, ImageShape shape) {
  std::vector<double> pixels(shape.pixel_count());
  for (std::size_t p = 0; p < pixels.size(); ++p) {
    pixels[p] = static_cast<double>((seed * 7 + p * 3) % 11) / 10.0;
  }
  return ImageTensor(shape, std::move(pixels));
}

void add_all_kinds(PredictionCache& cache, const std::string& id, const std::vector<double>& probs) {
  for (TransformKind kind : kAllTransformKinds) {
    cache.insert(transformed_query_id(id, kind), PredictionVector(probs));
  }
}

}  // namespace

ScriptedFixture::ScriptedFixture() {
  const std::vector<std::vector<double>> probs{
      {0.4, 0.3, 0.3},       {0.1, 0.8, 0.1},
      {0.98, 0.01, 0.01},    {0.2, 0.2, 0.6},
      {1.0 / 3, 1.0 / 3, 1.0 / 3}, {0.00001, 0.99998, 0.00001}};
  const std::vector<ClassIndex> labels{0, 1, 0, 0, 0, 1};
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const std::string id = "fx/test/" + std::to_string(i);
    samples.push_back(Sample{id, patterned_image(i, {4, 4, 1}), labels[i]});
    cache.insert(id, PredictionVector(probs[i]));
  }
  add_all_kinds(cache, "fx/test/0", {0.5, 0.25, 0.25});
  add_all_kinds(cache, "fx/test/1", {0.7, 0.2, 0.1});
  add_all_kinds(cache, "fx/test/2", {0.9, 0.05, 0.05});
  add_all_kinds(cache, "fx/test/3", {0.2, 0.2, 0.6});
  add_all_kinds(cache, "fx/test/4", {0.1, 0.8, 0.1});
  add_all_kinds(cache, "fx/test/5", {0.1, 0.8, 0.1});
  cache.insert(transformed_query_id("fx/test/5", TransformKind::rotate2d),
               PredictionVector({0.6, 0.3, 0.1}));
}

fs::path ScriptedFixture::write(const fs::path& dir) const {
  fs::create_directories(dir);
  write_prediction_cache(dir / "cache.csv", cache);
  return write_idx_manifest(dir, "fx", 3, samples);
}

PlantedFlagFixture::PlantedFlagFixture() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < 100; ++i) {
    const std::string id = "flag/test/" + std::to_string(i);
    std::vector<double> probs(10, 0.0);
    ClassIndex label = i % 10;
    if (i == kPlanted) {
      label = 5;
      probs.assign(10, 0.001);
      probs[3] = 0.991;  // entropy ~0.071
    } else if (i % 9 == 0) {
      // Clean sample the model gets wrong, but without confidence.
      const ClassIndex wrong = (label + 1) % 10;
      probs.assign(10, 0.05);
      probs[wrong] = 0.4;
      probs[label] = 0.2;
    } else {
      // Correct predictions ranging from very confident to unsure.
      const double top = 0.3 + 0.6999 * unit(rng);
      probs.assign(10, (1.0 - top) / 9.0);
      probs[label] = top;
    }
    samples.push_back(Sample{id, patterned_image(i, {4, 4, 1}), label});
    cache.insert(id, PredictionVector(probs));
  }
}

fs::path PlantedFlagFixture::write(const fs::path& dir) const {
  fs::create_directories(dir);
  write_prediction_cache(dir / "cache.csv", cache);
  return write_idx_manifest(dir, "flag", 10, samples);
}

std::vector<double> random_distribution(std::mt19937_64& rng, std::size_t classes,
                                        double peaked_rate) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> p(classes);
  if (unit(rng) < peaked_rate) {
    const std::size_t top = rng() % classes;
    for (auto& v : p) v = unit(rng) * 1e-4;
    p[top] = 1.0;
  } else {
    std::exponential_distribution<double> expo(1.0);
    for (auto& v : p) v = expo(rng);
  }
  if (unit(rng) < 0.1) p[rng() % classes] = 0.0;
  double sum = 0;
  for (double v : p) sum += v;
  if (sum == 0.0) {
    p[0] = 1.0;
    sum = 1.0;
  }
  for (auto& v : p) v /= sum;
  return p;
}

ImageTensor random_image(std::mt19937_64& rng, ImageShape shape) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> pixels(shape.pixel_count());
  for (auto& v : pixels) v = unit(rng);
  return ImageTensor(shape, std::move(pixels));
}

fs::path write_idx_manifest(const fs::path& dir, const std::string& name,
                            std::size_t class_count, const std::vector<Sample>& samples) {
  write_idx_pair(samples, dir / "images.idx3", dir / "labels.idx1");
  const nlohmann::json manifest{
      {"name", name},
      {"class_count", class_count},
      {"splits",
       {{"test", {{"format", "idx"}, {"images", "images.idx3"}, {"labels", "labels.idx1"}}}}}};
  const fs::path path = dir / "manifest.json";
  std::ofstream(path) << manifest.dump(2) << '\n';
  return path;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace triage::testing
