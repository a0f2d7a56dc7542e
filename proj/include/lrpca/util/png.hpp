#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace lrpca::util {

/// Grayscale raster with samples widened to 16 bits.
struct GrayImage {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  int bit_depth = 8;  // 8 or 16
  std::vector<std::uint16_t> pixels;  // row-major

  /// Largest representable sample: 255 or 65535.
  double max_value() const noexcept { return bit_depth == 16 ? 65535.0 : 255.0; }
};

/// Reads an 8- or 16-bit grayscale PNG (lower depths are expanded to 8).
/// FormatError on colour, alpha or palette images and on corrupt files.
GrayImage read_png_gray(const std::filesystem::path& path);

/// Writes `image` as grayscale PNG at its bit depth.
void write_png_gray(const std::filesystem::path& path, const GrayImage& image);

}  // namespace lrpca::util
