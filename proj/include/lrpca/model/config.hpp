#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace lrpca::model {

/// The four per-stage modules. Background (SEBEM) and the gradient networks of
/// target (SETEM) and noise (SENRM) are residual branches; reconstruction
/// (SEIRM) maps the summed components back to an image.
enum class ModuleKind { background = 0, target = 1, noise = 2, reconstruction = 3 };

inline constexpr std::array<ModuleKind, 4> kAllModules = {
    ModuleKind::background, ModuleKind::target, ModuleKind::noise, ModuleKind::reconstruction};

std::string_view to_string(ModuleKind kind);
/// Accepts the long names ("target") and the letters B/T/N/R.
ModuleKind module_kind_from_string(std::string_view name);

struct SeFlags {
  bool background = true;
  bool target = true;
  bool noise = true;
  bool reconstruction = true;

  bool enabled(ModuleKind kind) const noexcept;
  /// Letters of the enabled modules in B, T, N, R order; "none" when empty.
  std::string str() const;
  /// Inverse of str().
  static SeFlags parse(std::string_view text);

  friend bool operator==(const SeFlags&, const SeFlags&) = default;
};

struct ModelConfig {
  std::size_t stages = 6;               // K
  std::size_t bottleneck_channels = 4;  // BC
  std::size_t channels = 32;            // C
  std::size_t reconstruction_depth = 3; // l_D
  std::size_t se_ratio = 4;
  /// Extra conv(C->C) blocks in the background/target/noise branches.
  std::size_t fill_blocks = 0;
  SeFlags se{};
  double epsilon_init = 0.5;
  double sigma_init = 0.5;

  /// Throws ConfigError on the first violated invariant.
  void validate() const;
  /// Canonical key=value text, one per line; round-trips through parse().
  std::string str() const;
  static ModelConfig parse(std::string_view text);
  /// FNV-1a 64 of str().
  std::uint64_t hash() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Trainable scalars of a model built from `config`, from the layer inventory.
std::size_t count_parameters(const ModelConfig& config);

/// Trainable scalars of one SE block over `channels` channels.
std::size_t se_parameter_count(std::size_t channels, std::size_t ratio);

}  // namespace lrpca::model
