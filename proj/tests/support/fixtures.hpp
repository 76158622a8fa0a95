#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "triage/classifier.hpp"
#include "triage/entropy.hpp"
#include "triage/image.hpp"

namespace triage::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& prefix = "triage");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Six 4x4 samples "fx/test/0".."fx/test/5" with a scripted three-class
/// prediction table, including predictions for transformed query ids.
///
///   id  probs                      label  argmax  entropy
///   0   [0.4, 0.3, 0.3]            0      0       1.0889
///   1   [0.1, 0.8, 0.1]            1      1       0.6390
///   2   [0.98, 0.01, 0.01]         0      0       0.1120
///   3   [0.2, 0.2, 0.6]            0      2       0.9503
///   4   [1/3, 1/3, 1/3]            0      0       1.0986
///   5   [1e-5, 0.99998, 1e-5]      1      1       0.00025
///
/// Transformed inputs of 1 and 4 are mispredicted under every kind; 5 is
/// mispredicted under rotate2d only; 0 and 2 are never mispredicted.
struct ScriptedFixture {
  std::vector<Sample> samples;
  PredictionCache cache{3};

  ScriptedFixture();
  /// Writes IDX files, manifest.json and cache.csv into `dir`.
  std::filesystem::path write(const std::filesystem::path& dir) const;
};

/// 100 samples "flag/test/i": 99 correctly labelled (some of them
/// mispredicted with high entropy) and one, index 42, labelled 5 but
/// predicted 3 with entropy below 0.1.
struct PlantedFlagFixture {
  static constexpr std::size_t kPlanted = 42;
  std::vector<Sample> samples;
  PredictionCache cache{10};

  PlantedFlagFixture();
  std::filesystem::path write(const std::filesystem::path& dir) const;
};

/// Random distribution over `classes` classes; with probability
/// `peaked_rate` a near one-hot vector. Some entries are exactly zero.
std::vector<double> random_distribution(std::mt19937_64& rng, std::size_t classes,
                                        double peaked_rate = 0.2);

ImageTensor random_image(std::mt19937_64& rng, ImageShape shape);

/// Manifest for a single idx split, written next to the IDX files.
std::filesystem::path write_idx_manifest(const std::filesystem::path& dir, const std::string& name,
                                         std::size_t class_count,
                                         const std::vector<Sample>& samples);

std::string read_text(const std::filesystem::path& path);

}  // namespace triage::testing
