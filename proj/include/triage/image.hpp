#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "triage/entropy.hpp"

namespace triage {

struct ImageShape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  std::size_t pixel_count() const noexcept { return height * width * channels; }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

std::string to_string(const ImageShape& shape);

/// Row-major, channel-interleaved image with values in [0,1].
class ImageTensor {
 public:
  ImageTensor() = default;
  /// Zero-filled image.
  explicit ImageTensor(ImageShape shape);
  /// Throws ValidationError on a size mismatch or values outside [0,1].
  ImageTensor(ImageShape shape, std::vector<double> pixels);

  const ImageShape& shape() const noexcept { return shape_; }
  std::size_t height() const noexcept { return shape_.height; }
  std::size_t width() const noexcept { return shape_.width; }
  std::size_t channels() const noexcept { return shape_.channels; }

  std::span<const double> pixels() const noexcept { return pixels_; }
  std::span<double> mutable_pixels() noexcept { return pixels_; }

  double at(std::size_t row, std::size_t col, std::size_t channel) const {
    return pixels_[(row * shape_.width + col) * shape_.channels + channel];
  }
  double& at(std::size_t row, std::size_t col, std::size_t channel) {
    return pixels_[(row * shape_.width + col) * shape_.channels + channel];
  }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  ImageShape shape_;
  std::vector<double> pixels_;
};

struct Sample {
  std::string id;
  ImageTensor image;
  ClassIndex label = 0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

}  // namespace triage
