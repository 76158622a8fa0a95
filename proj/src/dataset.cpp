#include "triage/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "triage/error.hpp"
#include "triage/png.hpp"

namespace triage {

namespace fs = std::filesystem;

std::string SampleNaming::id(std::size_t index) const {
  return fmt::format("{}/{}/{}", dataset, split, index);
}

namespace {

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot open {}", path.string()));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
}

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset,
                        const fs::path& path) {
  if (bytes.size() < offset + 4) {
    throw ParseError(fmt::format("{}: unexpected end of file in header", path.string()));
  }
  return std::uint32_t{bytes[offset]} << 24 | std::uint32_t{bytes[offset + 1]} << 16 |
         std::uint32_t{bytes[offset + 2]} << 8 | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(v * 255.0)); }

}  // namespace

std::vector<Sample> load_idx_pair(const fs::path& images_path, const fs::path& labels_path,
                                  const SampleNaming& naming) {
  const auto images = read_file(images_path);
  const auto labels = read_file(labels_path);

  const std::uint32_t image_magic = read_be32(images, 0, images_path);
  if (image_magic != kIdxImagesMagic) {
    throw ParseError(fmt::format("{}: bad magic 0x{:08x}, expected 0x{:08x}",
                                 images_path.string(), image_magic, kIdxImagesMagic));
  }
  const std::uint32_t label_magic = read_be32(labels, 0, labels_path);
  if (label_magic != kIdxLabelsMagic) {
    throw ParseError(fmt::format("{}: bad magic 0x{:08x}, expected 0x{:08x}",
                                 labels_path.string(), label_magic, kIdxLabelsMagic));
  }
  const std::size_t count = read_be32(images, 4, images_path);
  const std::size_t rows = read_be32(images, 8, images_path);
  const std::size_t cols = read_be32(images, 12, images_path);
  const std::size_t label_count = read_be32(labels, 4, labels_path);
  if (count != label_count) {
    throw ParseError(fmt::format("count mismatch: {} declares {} images, {} declares {} labels",
                                 images_path.string(), count, labels_path.string(), label_count));
  }
  const std::size_t image_bytes = rows * cols;
  if (image_bytes == 0) {
    throw ParseError(fmt::format("{}: zero image size {}x{}", images_path.string(), rows, cols));
  }
  if (images.size() - 16 < count * image_bytes) {
    throw ParseError(fmt::format("{}: unexpected end of file ({} images declared)",
                                 images_path.string(), count));
  }
  if (labels.size() - 8 < count) {
    throw ParseError(fmt::format("{}: unexpected end of file ({} labels declared)",
                                 labels_path.string(), count));
  }
  if (images.size() != 16 + count * image_bytes || labels.size() != 8 + count) {
    throw ParseError(fmt::format("trailing bytes after declared records in {} or {}",
                                 images_path.string(), labels_path.string()));
  }

  const ImageShape shape{rows, cols, 1};
  std::vector<Sample> samples;
  samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<double> pixels(image_bytes);
    const std::uint8_t* src = images.data() + 16 + i * image_bytes;
    for (std::size_t p = 0; p < image_bytes; ++p) pixels[p] = src[p] / 255.0;
    samples.push_back(Sample{naming.id(i), ImageTensor(shape, std::move(pixels)), labels[8 + i]});
  }
  return samples;
}

void write_idx_pair(std::span<const Sample> samples, const fs::path& images_path,
                    const fs::path& labels_path) {
  ImageShape shape{28, 28, 1};
  if (!samples.empty()) shape = samples.front().image.shape();
  if (shape.channels != 1) throw ValidationError("IDX export needs single-channel images");

  std::vector<std::uint8_t> images;
  std::vector<std::uint8_t> labels;
  put_be32(images, kIdxImagesMagic);
  put_be32(images, static_cast<std::uint32_t>(samples.size()));
  put_be32(images, static_cast<std::uint32_t>(shape.height));
  put_be32(images, static_cast<std::uint32_t>(shape.width));
  put_be32(labels, kIdxLabelsMagic);
  put_be32(labels, static_cast<std::uint32_t>(samples.size()));
  for (const Sample& s : samples) {
    if (s.image.shape() != shape) throw ValidationError("non-uniform shape in IDX export");
    if (s.label > 255) throw ValidationError("IDX labels must fit in one byte");
    for (double v : s.image.pixels()) images.push_back(to_byte(v));
    labels.push_back(static_cast<std::uint8_t>(s.label));
  }
  write_file(images_path, images);
  write_file(labels_path, labels);
}

std::vector<Sample> load_cifar10_bin(std::span<const fs::path> paths, const SampleNaming& naming) {
  constexpr ImageShape kShape{32, 32, 3};
  constexpr std::size_t kPlane = 32 * 32;
  std::vector<Sample> samples;
  for (const fs::path& path : paths) {
    const auto bytes = read_file(path);
    if (bytes.size() % kCifarRecordSize != 0) {
      throw ParseError(fmt::format("{}: size {} is not a multiple of {}-byte records",
                                   path.string(), bytes.size(), kCifarRecordSize));
    }
    for (std::size_t offset = 0; offset < bytes.size(); offset += kCifarRecordSize) {
      const std::uint8_t label = bytes[offset];
      if (label > 9) {
        throw ParseError(fmt::format("{}: record {} has label byte {} > 9", path.string(),
                                     offset / kCifarRecordSize, label));
      }
      std::vector<double> pixels(kShape.pixel_count());
      const std::uint8_t* planes = bytes.data() + offset + 1;
      for (std::size_t p = 0; p < kPlane; ++p) {
        for (std::size_t c = 0; c < 3; ++c) pixels[p * 3 + c] = planes[c * kPlane + p] / 255.0;
      }
      samples.push_back(Sample{naming.id(samples.size()), ImageTensor(kShape, std::move(pixels)),
                               label});
    }
  }
  return samples;
}

void write_cifar10_bin(std::span<const Sample> samples, const fs::path& path) {
  constexpr ImageShape kShape{32, 32, 3};
  constexpr std::size_t kPlane = 32 * 32;
  std::vector<std::uint8_t> bytes;
  bytes.reserve(samples.size() * kCifarRecordSize);
  for (const Sample& s : samples) {
    if (s.image.shape() != kShape) throw ValidationError("CIFAR-10 export needs 32x32x3 images");
    if (s.label > 9) throw ValidationError("CIFAR-10 labels must be 0..9");
    bytes.push_back(static_cast<std::uint8_t>(s.label));
    const auto px = s.image.pixels();
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t p = 0; p < kPlane; ++p) bytes.push_back(to_byte(px[p * 3 + c]));
    }
  }
  write_file(path, bytes);
}

std::vector<Sample> load_image_dir(const fs::path& csv_path, const fs::path& root,
                                   std::size_t class_count, const SampleNaming& naming) {
  std::ifstream in(csv_path);
  if (!in) throw ConfigError(fmt::format("cannot open label list {}", csv_path.string()));
  std::vector<Sample> samples;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) {
      throw ParseError(fmt::format("{} row {}: expected filename,label", csv_path.string(), row));
    }
    const std::string filename = line.substr(0, comma);
    const std::string label_text = line.substr(comma + 1);
    std::size_t label = 0;
    const auto [ptr, ec] =
        std::from_chars(label_text.data(), label_text.data() + label_text.size(), label);
    if (ec != std::errc{} || ptr != label_text.data() + label_text.size()) {
      if (row == 1 && samples.empty()) continue;  // header
      throw ParseError(fmt::format("{} row {}: bad label '{}'", csv_path.string(), row,
                                   label_text));
    }
    if (label >= class_count) {
      throw ParseError(fmt::format("{} row {}: label {} out of range [0, {})", csv_path.string(),
                                   row, label, class_count));
    }
    const fs::path image_path = root / filename;
    if (!fs::exists(image_path)) {
      throw ConfigError(fmt::format("{} row {}: missing file {}", csv_path.string(), row,
                                    image_path.string()));
    }
    ImageTensor image = read_png(image_path);
    if (!samples.empty() && image.shape() != samples.front().image.shape()) {
      throw ParseError(fmt::format("{} row {}: non-uniform shape {} (first image is {})",
                                   csv_path.string(), row, to_string(image.shape()),
                                   to_string(samples.front().image.shape())));
    }
    samples.push_back(Sample{naming.id(samples.size()), std::move(image), label});
  }
  return samples;
}

namespace {

fs::path resolve(const fs::path& base, const std::string& value) {
  const fs::path p(value);
  return p.is_absolute() ? p : base / p;
}

fs::path existing(const fs::path& base, const nlohmann::json& split, const char* key,
                  const std::string& split_name) {
  if (!split.contains(key) || !split[key].is_string()) {
    throw ConfigError(fmt::format("split '{}' needs a \"{}\" path", split_name, key));
  }
  fs::path p = resolve(base, split[key].get<std::string>());
  if (!fs::exists(p)) {
    throw ConfigError(fmt::format("split '{}': file {} does not exist", split_name, p.string()));
  }
  return p;
}

}  // namespace

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open dataset manifest {}", path.string()));
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
  const fs::path base = path.parent_path();
  DatasetManifest manifest;
  try {
    manifest.name = doc.at("name").get<std::string>();
    manifest.class_count = doc.at("class_count").get<std::size_t>();
    if (doc.contains("class_names")) {
      manifest.class_names = doc["class_names"].get<std::vector<std::string>>();
    }
    for (const auto& [name, split] : doc.at("splits").items()) {
      SplitDescriptor d;
      const std::string format = split.at("format").get<std::string>();
      if (format == "idx") {
        d.format = DatasetFormat::idx;
        d.images = existing(base, split, "images", name);
        d.labels = existing(base, split, "labels", name);
      } else if (format == "cifar10-bin") {
        d.format = DatasetFormat::cifar10_bin;
        for (const auto& f : split.at("files")) {
          fs::path p = resolve(base, f.get<std::string>());
          if (!fs::exists(p)) {
            throw ConfigError(fmt::format("split '{}': file {} does not exist", name, p.string()));
          }
          d.files.push_back(std::move(p));
        }
      } else if (format == "image-dir") {
        d.format = DatasetFormat::image_dir;
        d.labels = existing(base, split, "labels", name);
        d.root = split.contains("root") ? resolve(base, split["root"].get<std::string>())
                                        : d.labels.parent_path();
      } else {
        throw ConfigError(fmt::format("split '{}' has unknown format '{}'", name, format));
      }
      manifest.splits.emplace(name, std::move(d));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
  if (manifest.class_count < 2) {
    throw ConfigError(fmt::format("{}: class_count must be at least 2", path.string()));
  }
  if (!manifest.class_names.empty() && manifest.class_names.size() != manifest.class_count) {
    throw ConfigError(fmt::format("{}: {} class names for {} classes", path.string(),
                                  manifest.class_names.size(), manifest.class_count));
  }
  return manifest;
}

std::vector<Sample> load_split(const DatasetManifest& manifest, const std::string& split) {
  const auto it = manifest.splits.find(split);
  if (it == manifest.splits.end()) {
    throw ConfigError(fmt::format("dataset '{}' has no split '{}'", manifest.name, split));
  }
  const SplitDescriptor& d = it->second;
  const SampleNaming naming{manifest.name, split};
  std::vector<Sample> samples;
  switch (d.format) {
    case DatasetFormat::idx: samples = load_idx_pair(d.images, d.labels, naming); break;
    case DatasetFormat::cifar10_bin: samples = load_cifar10_bin(d.files, naming); break;
    case DatasetFormat::image_dir:
      samples = load_image_dir(d.labels, d.root, manifest.class_count, naming);
      break;
  }
  for (const Sample& s : samples) {
    if (s.label >= manifest.class_count) {
      throw ParseError(fmt::format("{}: label {} out of range [0, {})", s.id, s.label,
                                   manifest.class_count));
    }
  }
  return samples;
}

}  // namespace triage
