#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lrpca/model/unfolded_model.hpp"
#include "lrpca/nn/adam.hpp"

namespace lrpca::harness {

inline constexpr char kCheckpointMagic[8] = {'L', 'R', 'P', 'C', 'A', 'N', 'E', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorRecord {
  std::string name;
  nn::Shape4 shape{};
  bool trainable = true;
  std::vector<float> data;
};

/// Everything needed to continue a run exactly where it stopped.
struct Checkpoint {
  model::ModelConfig model{};
  std::string run_config;  // RunConfig::str(false) of the producing run
  std::uint64_t epoch = 0;
  double best_val_miou = -1.0;
  std::uint64_t best_epoch = 0;
  std::string rng_state;
  std::vector<TensorRecord> parameters;
  std::int64_t adam_steps = 0;
  std::vector<TensorRecord> adam_m;  // same order and names as `parameters`' trainable subset
  std::vector<TensorRecord> adam_v;
  std::string train_log;      // CSV text so far
  std::string lipschitz_log;  // CSV text so far
};

/// Snapshot of a model (and optimizer, if given).
Checkpoint capture(model::UnfoldedModel<float>& model, const nn::Adam<float>* adam);

/// Copies parameters (and optimizer state) into `model`. Every name, shape and
/// the config hash are verified before anything is written, so a rejected
/// checkpoint leaves the targets untouched.
void restore(const Checkpoint& ckpt, model::UnfoldedModel<float>& model, nn::Adam<float>* adam);

/// Builds a model from the stored config and loads its parameters.
model::UnfoldedModel<float> load_model(const Checkpoint& ckpt);

/// Binary layout, little-endian throughout:
///   magic[8] | u32 version | str model_config | u64 config_hash | str run_config |
///   u64 epoch | f64 best_val | u64 best_epoch | str rng_state |
///   u32 count, count x (str name | u64[4] shape | u8 trainable | f32[] data) |
///   i64 adam_steps | u32 count, count x (str name | u64[4] shape | f32[] m | f32[] v) |
///   str train_log | str lipschitz_log
/// with str = u64 length + bytes. Written to a temporary file and renamed.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// FormatError on a bad magic, version, config hash or truncation; DataError
/// if the file cannot be opened. If `expected` is given its hash must match.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<model::ModelConfig>& expected = std::nullopt);

}  // namespace lrpca::harness
