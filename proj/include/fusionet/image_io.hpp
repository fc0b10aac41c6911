#pragma once

#include "fusionet/tensor.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>

namespace fusionet {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8-bit RGB raster. Pixel (y, x) channel c lives at pixels[(y * width + x) * 3 + c].
struct RgbImage {
  Index height = 0;
  Index width = 0;
  std::vector<unsigned char> pixels;

  RgbImage() = default;
  RgbImage(Index h, Index w) : height(h), width(w), pixels(static_cast<std::size_t>(h * w * 3), 0) {}

  unsigned char& at(Index y, Index x, int c) {
    return pixels[static_cast<std::size_t>((y * width + x) * 3 + c)];
  }
  unsigned char at(Index y, Index x, int c) const {
    return pixels[static_cast<std::size_t>((y * width + x) * 3 + c)];
  }
};

/// Decodes a PNG or JPEG file (detected by magic bytes, not extension).
/// Grayscale, palette and alpha inputs are converted to RGB.
RgbImage read_image(const std::filesystem::path& path);

void write_png(const std::filesystem::path& path, const RgbImage& image);

/// Bilinear resize with half-pixel centres, no aspect preservation, scaled
/// to [0, 1]. The result has shape [size, size, 3].
Tensor<float> to_model_input(const RgbImage& image, Index size);

}  // namespace fusionet
