#include "triage/image.hpp"

#include <cmath>

#include <fmt/format.h>

#include "triage/error.hpp"

namespace triage {

namespace {

void check_shape(const ImageShape& shape) {
  if (shape.height == 0 || shape.width == 0 || shape.channels == 0) {
    throw ValidationError(fmt::format("image shape {} has a zero dimension", to_string(shape)));
  }
}

}  // namespace

std::string to_string(const ImageShape& shape) {
  return fmt::format("{}x{}x{}", shape.height, shape.width, shape.channels);
}

ImageTensor::ImageTensor(ImageShape shape) : shape_(shape), pixels_(shape.pixel_count(), 0.0) {
  check_shape(shape_);
}

ImageTensor::ImageTensor(ImageShape shape, std::vector<double> pixels)
    : shape_(shape), pixels_(std::move(pixels)) {
  check_shape(shape_);
  if (pixels_.size() != shape_.pixel_count()) {
    throw ValidationError(fmt::format("image of shape {} needs {} values, got {}",
                                      to_string(shape_), shape_.pixel_count(), pixels_.size()));
  }
  for (std::size_t i = 0; i < pixels_.size(); ++i) {
    const double v = pixels_[i];
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ValidationError(fmt::format("pixel {} has value {} outside [0,1]", i, v));
    }
  }
}

}  // namespace triage
