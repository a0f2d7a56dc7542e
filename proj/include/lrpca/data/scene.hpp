#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "lrpca/nn/array4.hpp"

namespace lrpca::data {

using Plane = nn::Array4<double>;  // 1 x 1 x H x W

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct SceneConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t background_rank = 3;
  double background_scale = 0.6;
  std::size_t target_count = 3;
  Range target_amplitude{0.15, 0.4};
  Range target_sigma{1.0, 2.5};
  std::uint64_t seed = 0;

  /// ConfigError on an invalid rank, range or a footprint that cannot fit.
  void validate() const;
};

enum class NoiseKind { gaussian, salt_pepper };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::gaussian;
  double gaussian_variance = 0.0;  // on the 0-255 intensity scale
  double salt_prob = 0.0;
  double pepper_prob = 0.0;

  static NoiseSpec gaussian(double variance) { return {NoiseKind::gaussian, variance, 0.0, 0.0}; }
  static NoiseSpec salt_pepper(double salt, double pepper) {
    return {NoiseKind::salt_pepper, 0.0, salt, pepper};
  }
  void validate() const;
};

struct Sample {
  std::string id;
  Plane image;  // values in [0, 1]
  Plane mask;   // values in {0, 1}
  std::string meta;
};

/// Sum of `background_rank` outer products of smoothed positive random
/// profiles, scaled so the maximum is `background_scale`.
Plane gen_background(const SceneConfig& config);

struct TargetLayer {
  Plane image;    // clamp(base + spots)
  Plane mask;     // pixels where a spot exceeds half its amplitude
  Plane targets;  // the added spots alone
};

/// Adds `target_count` Gaussian spots at non-overlapping positions.
/// DataError if they cannot be placed after bounded retries.
TargetLayer gen_targets(const Plane& base, const SceneConfig& config);

/// Sparse impulse layer: round(fraction * H * W) distinct pixels set to
/// +amplitude or -amplitude (fair sign), zero elsewhere.
Plane gen_impulses(std::size_t height, std::size_t width, double fraction, double amplitude,
                   std::uint64_t seed);

/// Root mean square of all entries.
double rms(const Plane& p);

/// One synthetic sample: background, spots and mask under `config.seed`.
Sample gen_scene(const SceneConfig& config);

/// Gaussian: adds N(0, variance / 255^2) then clamps to [0, 1].
/// Salt-pepper: each pixel becomes 1 w.p. salt, else 0 w.p. pepper.
Plane add_noise(const Plane& image, const NoiseSpec& spec, std::uint64_t seed);

/// `count` scenes; scene i uses seed derive_seed(seed, i) and id "scene_%05d".
std::vector<Sample> generate_scenes(SceneConfig config, std::size_t count, std::uint64_t seed);

/// Seeded shuffle, then the first round(train_fraction * n) go to train.
std::pair<std::vector<Sample>, std::vector<Sample>> split_dataset(std::vector<Sample> samples,
                                                                  double train_fraction,
                                                                  std::uint64_t seed);

/// Reads root/images/*.png and root/masks/*.png paired by file name, in file
/// name order. Images are scaled to [0, 1]; masks become 1 where the sample
/// exceeds 127/255 of full scale.
std::vector<Sample> load_dataset(const std::filesystem::path& root);

/// Writes samples as 8-bit PNGs in the layout load_dataset reads.
void save_dataset(const std::filesystem::path& root, const std::vector<Sample>& samples);

}  // namespace lrpca::data
