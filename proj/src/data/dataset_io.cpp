#include <algorithm>
#include <cmath>
#include <map>

#include "lrpca/data/scene.hpp"
#include "lrpca/errors.hpp"
#include "lrpca/util/png.hpp"

namespace lrpca::data {

namespace fs = std::filesystem;

namespace {

std::map<std::string, fs::path> png_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("missing directory '" + dir.string() + "'");
  std::map<std::string, fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      out.emplace(entry.path().filename().string(), entry.path());
    }
  }
  return out;
}

Plane to_plane(const util::GrayImage& g) {
  Plane p({1, 1, g.height, g.width});
  const double scale = 1.0 / g.max_value();
  for (std::size_t i = 0; i < g.pixels.size(); ++i) p[i] = g.pixels[i] * scale;
  return p;
}

util::GrayImage to_gray8(const Plane& p) {
  const nn::Shape4 s = p.shape();
  if (s.n != 1 || s.c != 1) throw ShapeError("save: expected a single plane", "channels");
  util::GrayImage g;
  g.width = static_cast<std::uint32_t>(s.w);
  g.height = static_cast<std::uint32_t>(s.h);
  g.bit_depth = 8;
  g.pixels.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    g.pixels[i] = static_cast<std::uint16_t>(std::lround(std::clamp(p[i], 0.0, 1.0) * 255.0));
  }
  return g;
}

}  // namespace

std::vector<Sample> load_dataset(const fs::path& root) {
  const auto images = png_files(root / "images");
  const auto masks = png_files(root / "masks");
  for (const auto& [name, path] : masks) {
    if (images.count(name) == 0) {
      throw DataError("mask '" + path.string() + "' has no matching image");
    }
  }
  std::vector<Sample> out;
  for (const auto& [name, path] : images) {
    const auto m = masks.find(name);
    if (m == masks.end()) {
      throw DataError("image '" + path.string() + "' has no matching mask");
    }
    const auto img = util::read_png_gray(path);
    const auto msk = util::read_png_gray(m->second);
    if (img.width != msk.width || img.height != msk.height) {
      throw DataError("image '" + path.string() + "' and its mask differ in size");
    }
    Sample s;
    s.id = fs::path(name).stem().string();
    s.image = to_plane(img);
    s.mask = to_plane(msk);
    for (double& v : s.mask.values()) v = v > 127.0 / 255.0 ? 1.0 : 0.0;
    s.meta = path.string();
    out.push_back(std::move(s));
  }
  return out;
}

void save_dataset(const fs::path& root, const std::vector<Sample>& samples) {
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  for (const auto& s : samples) {
    if (s.id.empty()) throw DataError("save: sample without id");
    util::write_png_gray(root / "images" / (s.id + ".png"), to_gray8(s.image));
    util::write_png_gray(root / "masks" / (s.id + ".png"), to_gray8(s.mask));
  }
}

}  // namespace lrpca::data
