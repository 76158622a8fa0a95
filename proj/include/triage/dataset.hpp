#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "triage/image.hpp"

namespace triage {

/// Produces sample ids of the form "{dataset}/{split}/{index}".
struct SampleNaming {
  std::string dataset = "dataset";
  std::string split = "test";

  std::string id(std::size_t index) const;
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
inline constexpr std::size_t kCifarRecordSize = 3073;

/// Reads an IDX image file (u8, 3 dims) and its label file. Pixels are
/// divided by 255.
std::vector<Sample> load_idx_pair(const std::filesystem::path& images_path,
                                  const std::filesystem::path& labels_path,
                                  const SampleNaming& naming = {});

/// Inverse of load_idx_pair. Requires single-channel images of one shape.
void write_idx_pair(std::span<const Sample> samples, const std::filesystem::path& images_path,
                    const std::filesystem::path& labels_path);

/// CIFAR-10 binary batches: 1 label byte then 3072 channel-planar pixels.
/// Indices run across files in the order given.
std::vector<Sample> load_cifar10_bin(std::span<const std::filesystem::path> paths,
                                     const SampleNaming& naming = {});

void write_cifar10_bin(std::span<const Sample> samples, const std::filesystem::path& path);

/// `csv_path` lists `filename,label` rows (header optional); filenames are
/// resolved against `root`.
std::vector<Sample> load_image_dir(const std::filesystem::path& csv_path,
                                   const std::filesystem::path& root, std::size_t class_count,
                                   const SampleNaming& naming = {});

enum class DatasetFormat { idx, cifar10_bin, image_dir };

struct SplitDescriptor {
  DatasetFormat format = DatasetFormat::idx;
  std::filesystem::path images;               // idx
  std::filesystem::path labels;               // idx, image-dir (csv)
  std::vector<std::filesystem::path> files;   // cifar10-bin
  std::filesystem::path root;                 // image-dir
};

struct DatasetManifest {
  std::string name;
  std::size_t class_count = 0;
  std::vector<std::string> class_names;
  std::map<std::string, SplitDescriptor> splits;
};

/// Parses a JSON manifest. Relative paths are resolved against the
/// manifest's directory; every referenced file must exist.
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Loads one split and checks every label against class_count.
std::vector<Sample> load_split(const DatasetManifest& manifest, const std::string& split);

}  // namespace triage
