#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lrpca/model/unfolded_model.hpp"
#include "lrpca/util/png.hpp"

namespace lrpca::harness {

inline constexpr char kRawMagic[8] = {'L', 'R', 'P', 'C', 'A', 'R', 'A', 'W'};

/// 16-byte header (magic[8], u32 height, u32 width) then height * width
/// float32 samples, little-endian, row-major.
void write_raw(const std::filesystem::path& path, const nn::Array4<float>& plane);
nn::Array4<float> read_raw(const std::filesystem::path& path);

/// Min-max scaling to 0..255; a constant plane maps to all zeros.
util::GrayImage scale_to_gray8(const nn::Array4<float>& plane);

struct DumpEntry {
  std::size_t stage = 0;  // 1-based
  char component = 'B';   // B, T, N or D
  std::filesystem::path raw;
  std::filesystem::path png;
};

/// Runs the model on one plane and writes B, T, N and D of every stage as
/// stageKK_X.raw and stageKK_X.png plus manifest.tsv into `out_dir`.
std::vector<DumpEntry> decompose(const model::UnfoldedModel<float>& model,
                                 const nn::Array4<float>& image, const std::filesystem::path& out_dir);

}  // namespace lrpca::harness
