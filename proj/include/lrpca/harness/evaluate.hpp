#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lrpca/data/scene.hpp"
#include "lrpca/harness/run_config.hpp"
#include "lrpca/metrics/metrics.hpp"
#include "lrpca/model/unfolded_model.hpp"

namespace lrpca::harness {

/// Maps one image plane to a target probability map of the same shape.
using Predictor = std::function<data::Plane(const data::Plane& image)>;

/// sigmoid(T^K) of an eval-mode pass. The model must outlive the predictor.
Predictor model_predictor(const model::UnfoldedModel<float>& model);

/// Classical decomposition: the positive part of T scaled by its maximum, so
/// that thresholding at 0.5 keeps pixels above half the peak response.
Predictor rpca_predictor(const RpcaBaselineConfig& config);

struct EvalOptions {
  double threshold = 0.5;
  double match_radius = metrics::kDefaultMatchRadius;
  /// Applied to each input before prediction; image i uses seed
  /// derive_seed(noise_seed, i).
  std::optional<data::NoiseSpec> noise;
  std::uint64_t noise_seed = 0;
};

/// Per-image reports in sample order; shapes of image and mask must agree.
metrics::MetricAccumulator evaluate(const Predictor& predict, const std::vector<data::Sample>& samples,
                                    const EvalOptions& options = {});

enum class SweepProtocol { gaussian, salt_pepper };

std::string_view to_string(SweepProtocol p);
SweepProtocol sweep_protocol_from_string(std::string_view name);

struct SweepLevel {
  double level = 0.0;  // variance (gaussian) or salt probability
  data::NoiseSpec spec;
};

inline constexpr double kSweepPepper = 0.04;

/// Gaussian variances {0, 5, 10, 15, 20}; salt {0, .02, .04, .06, .08, .10}
/// with pepper 0.04 at every nonzero level. Level 0 is the clean input.
std::vector<SweepLevel> default_sweep_levels(SweepProtocol protocol);

/// Custom grid; a zero level is always clean.
std::vector<SweepLevel> sweep_levels(SweepProtocol protocol, const std::vector<double>& values,
                                     double pepper = kSweepPepper);

struct SweepRow {
  SweepProtocol protocol = SweepProtocol::gaussian;
  SweepLevel level;
  metrics::MetricReport report;
};

/// One summary report per level, with the same per-image noise seeds at
/// every level.
std::vector<SweepRow> robustness_sweep(const Predictor& predict,
                                       const std::vector<data::Sample>& samples,
                                       SweepProtocol protocol, const std::vector<SweepLevel>& levels,
                                       const EvalOptions& base = {});

/// protocol,level,salt,pepper,miou,f1,pd,fa,auc,tp,fp,fn,tn
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace lrpca::harness
