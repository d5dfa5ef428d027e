#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace teformer {

/// Interleaved 8-bit raster, row-major, RGB channel order.
struct Image8 {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;

  std::uint8_t& at(int y, int x, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

/// Reads PNG or TIFF (any format OpenCV decodes) as 1- or 3-channel 8-bit.
Image8 read_image(const std::string& path);
/// PNG writer; output bytes depend only on the pixels.
void write_png(const std::string& path, const Image8& image);
/// Float32 array in NumPy .npy format (C order).
void write_npy(const std::string& path, const std::vector<float>& values, const std::vector<std::size_t>& shape);

}  // namespace teformer
