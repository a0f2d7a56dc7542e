#include "lrpca/harness/decompose.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

#include "lrpca/errors.hpp"

namespace lrpca::harness {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "raw dumps assume a little-endian host");

void write_raw(const fs::path& path, const nn::Array4<float>& plane) {
  const auto s = plane.shape();
  if (s.n != 1 || s.c != 1) throw ShapeError("write_raw: expected a single plane", "channels");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot create '" + path.string() + "'");
  const auto h = static_cast<std::uint32_t>(s.h);
  const auto w = static_cast<std::uint32_t>(s.w);
  out.write(kRawMagic, 8);
  out.write(reinterpret_cast<const char*>(&h), 4);
  out.write(reinterpret_cast<const char*>(&w), 4);
  out.write(reinterpret_cast<const char*>(plane.data()),
            static_cast<std::streamsize>(plane.size() * sizeof(float)));
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

nn::Array4<float> read_raw(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kRawMagic, 8) != 0) {
    throw FormatError("'" + path.string() + "' is not a raw plane dump");
  }
  std::uint32_t h = 0, w = 0;
  std::memcpy(&h, bytes.data() + 8, 4);
  std::memcpy(&w, bytes.data() + 12, 4);
  const std::size_t count = static_cast<std::size_t>(h) * w;
  if (bytes.size() != 16 + count * sizeof(float)) {
    throw FormatError("'" + path.string() + "' has the wrong length for " + std::to_string(h) +
                      "x" + std::to_string(w));
  }
  nn::Array4<float> a({1, 1, h, w});
  std::memcpy(a.data(), bytes.data() + 16, count * sizeof(float));
  return a;
}

util::GrayImage scale_to_gray8(const nn::Array4<float>& plane) {
  const auto s = plane.shape();
  if (s.n != 1 || s.c != 1) throw ShapeError("scale_to_gray8: expected a single plane", "channels");
  util::GrayImage g;
  g.width = static_cast<std::uint32_t>(s.w);
  g.height = static_cast<std::uint32_t>(s.h);
  g.bit_depth = 8;
  g.pixels.assign(plane.size(), 0);
  if (plane.empty()) return g;
  const auto [lo, hi] = std::minmax_element(plane.values().begin(), plane.values().end());
  const double range = static_cast<double>(*hi) - *lo;
  if (!(range > 0.0) || !std::isfinite(range)) return g;
  for (std::size_t i = 0; i < plane.size(); ++i) {
    g.pixels[i] = static_cast<std::uint16_t>(std::lround((plane[i] - *lo) / range * 255.0));
  }
  return g;
}

std::vector<DumpEntry> decompose(const model::UnfoldedModel<float>& model,
                                 const nn::Array4<float>& image, const fs::path& out_dir) {
  const auto s = image.shape();
  if (s.n != 1 || s.c != 1) throw ShapeError("decompose: expected a single plane", "batch");
  const auto out = model.infer(image, true);
  fs::create_directories(out_dir);
  std::vector<DumpEntry> entries;
  std::string manifest = "stage\tcomponent\traw\tpng\n";
  for (const auto& st : *out.trace) {
    const std::pair<char, const nn::Array4<float>*> parts[] = {
        {'B', &st.B}, {'T', &st.T}, {'N', &st.N}, {'D', &st.D}};
    for (const auto& [comp, plane] : parts) {
      char stem[32];
      std::snprintf(stem, sizeof stem, "stage%02zu_%c", st.stage_index, comp);
      DumpEntry e{st.stage_index, comp, out_dir / (std::string(stem) + ".raw"),
                  out_dir / (std::string(stem) + ".png")};
      write_raw(e.raw, *plane);
      util::write_png_gray(e.png, scale_to_gray8(*plane));
      manifest += std::to_string(e.stage) + "\t" + comp + "\t" + e.raw.filename().string() + "\t" +
                  e.png.filename().string() + "\n";
      entries.push_back(std::move(e));
    }
  }
  std::ofstream mf(out_dir / "manifest.tsv", std::ios::binary | std::ios::trunc);
  mf << manifest;
  if (!mf) throw DataError("cannot write manifest in '" + out_dir.string() + "'");
  return entries;
}

}  // namespace lrpca::harness
