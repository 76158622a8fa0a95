#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "triage/image.hpp"

namespace triage {

/// Decodes 8- or 16-bit grayscale/RGB PNGs (alpha dropped, palettes expanded)
/// into an image with values scaled to [0,1].
ImageTensor read_png(const std::filesystem::path& path);

/// Encodes an image with 1 or 3 channels as an 8-bit PNG.
std::vector<std::uint8_t> encode_png(const ImageTensor& image);
void write_png(const std::filesystem::path& path, const ImageTensor& image);

std::string base64_encode(std::span<const std::uint8_t> bytes);

}  // namespace triage
