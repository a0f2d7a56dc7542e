#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "lrpca/data/scene.hpp"
#include "lrpca/metrics/metrics.hpp"
#include "lrpca/model/config.hpp"
#include "lrpca/util/kv.hpp"

namespace lrpca::harness {

enum class RunMode { train, eval, decompose, sweep, synth, gradcheck, baseline, ablate };

std::string_view to_string(RunMode mode);
RunMode run_mode_from_string(std::string_view name);

/// Where samples come from: a directory in the images/ + masks/ layout, or
/// `scene_count` synthetic scenes. Either way the set is split by seed.
struct DataConfig {
  std::optional<std::filesystem::path> dataset;
  data::SceneConfig scene{};
  std::size_t scene_count = 200;
  double train_fraction = 0.8;
};

/// Optional noise applied to training batches; evaluation noise is chosen
/// per sweep.
struct TrainNoise {
  bool enabled = false;
  data::NoiseSpec spec{};
};

struct RpcaBaselineConfig {
  std::optional<double> lambda;
  std::optional<double> mu;
  std::size_t max_iters = 500;
};

struct RunConfig {
  RunMode mode = RunMode::train;
  model::ModelConfig model{};
  metrics::LossConfig loss{};
  double lr = 1e-4;
  std::size_t batch_size = 8;
  std::size_t epochs = 50;
  /// Validation, Lipschitz sampling and best-checkpoint cadence, in epochs.
  std::size_t val_every = 5;
  DataConfig data{};
  TrainNoise train_noise{};
  RpcaBaselineConfig rpca{};
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";

  void validate() const;

  /// Canonical key = value text. Without paths it omits output_dir and the
  /// dataset location so artifacts do not depend on where a run lives.
  std::string str(bool include_paths = true) const;

  /// Unknown keys, malformed values, and keys of both data sources at once
  /// raise ConfigError. Keys absent from `kv` keep their defaults.
  static RunConfig from_key_values(const util::KeyValues& kv);
  static RunConfig parse(std::string_view text);
};

/// Applies `overrides` on top of `base` (later wins).
util::KeyValues merge(util::KeyValues base, const util::KeyValues& overrides);

}  // namespace lrpca::harness
