#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lrpca/data/scene.hpp"
#include "lrpca/harness/run_config.hpp"
#include "lrpca/model/lipschitz.hpp"
#include "lrpca/model/unfolded_model.hpp"

namespace lrpca::harness {

struct DataSplit {
  std::vector<data::Sample> train;
  std::vector<data::Sample> val;
};

/// Loads or synthesizes the samples named by `config.data` and splits them
/// by seed. DataError if images disagree in shape with each other or with
/// their masks.
DataSplit prepare_data(const RunConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double seg = 0.0;
  double fidelity = 0.0;
  double total = 0.0;
  std::optional<double> val_miou;  // set on validation epochs
};

struct LipschitzRecord {
  std::size_t epoch = 0;
  model::LipschitzEstimate estimate;
};

struct TrainOptions {
  /// Continue from this checkpoint instead of a fresh initialization.
  std::optional<std::filesystem::path> resume;
  /// Stop (and write last.ckpt) once this epoch has finished.
  std::optional<std::size_t> stop_after;
  /// Receives one log line per epoch.
  std::ostream* progress = nullptr;
  /// Write train_log.csv, lipschitz.csv, last.ckpt and best.ckpt to the
  /// output directory.
  bool write_files = true;
  model::LipschitzOptions lipschitz{};
};

struct TrainResult {
  std::vector<EpochRecord> history;  // every epoch so far, including resumed ones
  std::vector<LipschitzRecord> lipschitz;
  double best_val_miou = -1.0;
  std::size_t best_epoch = 0;
  model::UnfoldedModel<float> model;
};

/// Mini-batch Adam on soft-IoU + eta * fidelity. Every validation epoch
/// (each `val_every`, and the last) scores the val split, samples the
/// Lipschitz estimates of the target and noise networks of every stage, and
/// writes last.ckpt (plus best.ckpt when val mIoU improves). A non-finite loss
/// raises NumericError naming the first stage whose state went non-finite.
TrainResult train(const RunConfig& config, const DataSplit& data, const TrainOptions& options = {});

std::string train_log_header();
std::string train_log_row(const EpochRecord& r);
std::string lipschitz_log_header();
std::string lipschitz_log_row(const LipschitzRecord& r);

/// "stage k (X)" for the first non-finite component of the trace, or empty.
std::string locate_non_finite(const model::DecompositionTrace<float>& trace);

/// Mean of each window of `width` consecutive values (size n - width + 1).
std::vector<double> moving_average(const std::vector<double>& values, std::size_t width);

/// Coefficient of variation (population std / mean) of the last
/// ceil(n / 4) values.
double final_quarter_cv(const std::vector<double>& values);

}  // namespace lrpca::harness
