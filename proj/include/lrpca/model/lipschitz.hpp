#pragma once

#include <cstddef>
#include <cstdint>

#include "lrpca/model/unfolded_model.hpp"

namespace lrpca::model {

struct LipschitzOptions {
  std::size_t probe_count = 4;  // probe pairs, at least 2
  /// Each probe pair is refined this many times by moving x2 along
  /// J^T (g(x2) - g(x1)), which drives the quotient toward the local
  /// operator norm.
  std::size_t power_steps = 6;
  nn::Shape4 probe_shape{1, 1, 32, 32};
  /// RMS size of x2 - x1.
  double separation = 0.05;
  std::uint64_t seed = 0;
};

struct LipschitzEstimate {
  ModuleKind module = ModuleKind::target;
  std::size_t stage_index = 0;
  /// Largest ||g(x1) - g(x2)|| / ||x1 - x2|| seen; a lower bound on the
  /// Lipschitz constant of g.
  double estimate = 0.0;
  std::size_t sample_count = 0;
};

/// Difference-quotient estimate for an arbitrary single-channel map. Probes
/// run in eval mode; parameter gradients are left as they were. Coincident
/// pairs are skipped; NumericError if every pair coincides.
template <typename Real>
LipschitzEstimate estimate_lipschitz(nn::Layer<Real>& g, const LipschitzOptions& options);

/// Estimate for the target (H) or noise (F) gradient network of one stage.
template <typename Real>
LipschitzEstimate estimate_lipschitz(UnfoldedModel<Real>& model, ModuleKind module,
                                     std::size_t stage, const LipschitzOptions& options);

}  // namespace lrpca::model
