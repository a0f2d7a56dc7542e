#include "lrpca/data/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "lrpca/errors.hpp"
#include "lrpca/nn/rng.hpp"

namespace lrpca::data {

namespace {

constexpr std::uint64_t kBackgroundStream = 1;
constexpr std::uint64_t kTargetStream = 2;
constexpr std::size_t kPlacementRetries = 1000;

std::size_t footprint_margin(double sigma) {
  return static_cast<std::size_t>(std::ceil(3.0 * sigma));
}

// Moving average with mirror padding (edge sample not repeated).
std::vector<double> box_filter(const std::vector<double>& v, std::size_t window) {
  const long n = static_cast<long>(v.size());
  const long half = static_cast<long>(window / 2);
  auto at = [&](long i) {
    while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
    return v[static_cast<std::size_t>(i)];
  };
  std::vector<double> out(v.size());
  for (long i = 0; i < n; ++i) {
    double s = 0.0;
    for (long k = -half; k <= half; ++k) s += at(i + k);
    out[static_cast<std::size_t>(i)] = s / static_cast<double>(2 * half + 1);
  }
  return out;
}

std::vector<double> smooth_profile(std::size_t n, nn::Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform();
  if (n < 3) return v;
  const std::size_t window = std::max<std::size_t>(3, (n / 8) | 1);
  return box_filter(box_filter(v, window), window);
}

}  // namespace

void SceneConfig::validate() const {
  if (height == 0 || width == 0) throw ConfigError("scene: empty image size");
  if (background_rank < 1 || background_rank > std::min(height, width)) {
    throw ConfigError("scene: background rank must lie in [1, min(H, W)]");
  }
  if (!(background_scale >= 0.0) || !std::isfinite(background_scale)) {
    throw ConfigError("scene: background_scale must be finite and non-negative");
  }
  if (!(target_amplitude.lo >= 0.0) || !(target_amplitude.hi >= target_amplitude.lo)) {
    throw ConfigError("scene: amplitude range must satisfy 0 <= lo <= hi");
  }
  if (!(target_sigma.lo > 0.0) || !(target_sigma.hi >= target_sigma.lo) ||
      !std::isfinite(target_sigma.hi)) {
    throw ConfigError("scene: sigma range must satisfy 0 < lo <= hi");
  }
  if (target_count > 0) {
    const std::size_t m = footprint_margin(target_sigma.hi);
    if (2 * m + 1 > height || 2 * m + 1 > width) {
      throw ConfigError("scene: target footprint does not fit in the image");
    }
  }
}

void NoiseSpec::validate() const {
  if (kind == NoiseKind::gaussian) {
    if (!(gaussian_variance >= 0.0) || !std::isfinite(gaussian_variance)) {
      throw ConfigError("noise: gaussian variance must be finite and non-negative");
    }
    return;
  }
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(salt_prob) || !prob(pepper_prob)) {
    throw ConfigError("noise: salt and pepper probabilities must lie in [0, 1]");
  }
  if (salt_prob + pepper_prob > 1.0) throw ConfigError("noise: salt + pepper exceeds 1");
}

Plane gen_background(const SceneConfig& config) {
  config.validate();
  nn::Rng rng(nn::derive_seed(config.seed, kBackgroundStream));
  Plane b({1, 1, config.height, config.width});
  for (std::size_t r = 0; r < config.background_rank; ++r) {
    const auto u = smooth_profile(config.height, rng);
    const auto v = smooth_profile(config.width, rng);
    for (std::size_t y = 0; y < config.height; ++y)
      for (std::size_t x = 0; x < config.width; ++x) b(0, 0, y, x) += u[y] * v[x];
  }
  const double peak = *std::max_element(b.values().begin(), b.values().end());
  if (peak > 0.0) b *= config.background_scale / peak;
  return b;
}

TargetLayer gen_targets(const Plane& base, const SceneConfig& config) {
  config.validate();
  const nn::Shape4 s = base.shape();
  if (s.n != 1 || s.c != 1 || s.h != config.height || s.w != config.width) {
    throw ShapeError("gen_targets: base " + s.str() + " does not match the scene size",
                     s.h != config.height ? "height" : "width");
  }
  nn::Rng rng(nn::derive_seed(config.seed, kTargetStream));
  TargetLayer out{base, Plane(s), Plane(s)};

  struct Spot {
    double cy, cx, sigma;
  };
  std::vector<Spot> placed;
  std::size_t attempts = 0;
  while (placed.size() < config.target_count) {
    if (++attempts > kPlacementRetries * std::max<std::size_t>(1, config.target_count)) {
      throw DataError("gen_targets: cannot place " + std::to_string(config.target_count) +
                      " non-overlapping targets in " + std::to_string(config.height) + "x" +
                      std::to_string(config.width));
    }
    const double amp = rng.uniform(config.target_amplitude.lo, config.target_amplitude.hi);
    const double sigma = rng.uniform(config.target_sigma.lo, config.target_sigma.hi);
    const double m = static_cast<double>(footprint_margin(sigma));
    const double cy = rng.uniform(m, static_cast<double>(config.height - 1) - m);
    const double cx = rng.uniform(m, static_cast<double>(config.width - 1) - m);
    const bool overlaps = std::any_of(placed.begin(), placed.end(), [&](const Spot& p) {
      const double reach = 3.0 * (sigma + p.sigma);
      return (cy - p.cy) * (cy - p.cy) + (cx - p.cx) * (cx - p.cx) < reach * reach;
    });
    if (overlaps) continue;
    placed.push_back({cy, cx, sigma});
    for (std::size_t y = 0; y < s.h; ++y) {
      for (std::size_t x = 0; x < s.w; ++x) {
        const double dy = static_cast<double>(y) - cy;
        const double dx = static_cast<double>(x) - cx;
        const double v = amp * std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
        out.targets(0, 0, y, x) += v;
        if (v > 0.5 * amp) out.mask(0, 0, y, x) = 1.0;
      }
    }
  }
  out.image += out.targets;
  for (double& v : out.image.values()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

Plane gen_impulses(std::size_t height, std::size_t width, double fraction, double amplitude,
                   std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("impulses: fraction must lie in [0, 1]");
  Plane p({1, 1, height, width});
  const std::size_t count =
      static_cast<std::size_t>(std::llround(fraction * static_cast<double>(p.size())));
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  nn::Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(order[i], order[i + rng.index(order.size() - i)]);
    p[order[i]] = rng.uniform() < 0.5 ? -amplitude : amplitude;
  }
  return p;
}

double rms(const Plane& p) {
  return p.size() == 0 ? 0.0 : nn::frobenius_norm(p) / std::sqrt(static_cast<double>(p.size()));
}

Sample gen_scene(const SceneConfig& config) {
  auto layer = gen_targets(gen_background(config), config);
  Sample s;
  s.image = std::move(layer.image);
  s.mask = std::move(layer.mask);
  s.meta = "synthetic seed=" + std::to_string(config.seed);
  return s;
}

Plane add_noise(const Plane& image, const NoiseSpec& spec, std::uint64_t seed) {
  spec.validate();
  nn::Rng rng(seed);
  Plane out = image;
  if (spec.kind == NoiseKind::gaussian) {
    if (spec.gaussian_variance == 0.0) return out;
    const double std = std::sqrt(spec.gaussian_variance) / 255.0;
    for (double& v : out.values()) v = std::clamp(v + rng.normal(0.0, std), 0.0, 1.0);
    return out;
  }
  if (spec.salt_prob == 0.0 && spec.pepper_prob == 0.0) return out;
  for (double& v : out.values()) {
    const double u = rng.uniform();
    if (u < spec.salt_prob) {
      v = 1.0;
    } else if (u < spec.salt_prob + spec.pepper_prob) {
      v = 0.0;
    }
  }
  return out;
}

std::vector<Sample> generate_scenes(SceneConfig config, std::size_t count, std::uint64_t seed) {
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    config.seed = nn::derive_seed(seed, i);
    Sample s = gen_scene(config);
    char id[32];
    std::snprintf(id, sizeof id, "scene_%05zu", i);
    s.id = id;
    out.push_back(std::move(s));
  }
  return out;
}

std::pair<std::vector<Sample>, std::vector<Sample>> split_dataset(std::vector<Sample> samples,
                                                                  double train_fraction,
                                                                  std::uint64_t seed) {
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) {
    throw ConfigError("split: train fraction must lie in [0, 1]");
  }
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  nn::Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  const auto n_train =
      static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(samples.size())));
  std::pair<std::vector<Sample>, std::vector<Sample>> out;
  for (std::size_t k = 0; k < order.size(); ++k) {
    (k < n_train ? out.first : out.second).push_back(std::move(samples[order[k]]));
  }
  return out;
}

}  // namespace lrpca::data
