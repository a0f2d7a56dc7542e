#pragma once

#include <cstdint>
#include <string>

#include "lrpca/nn/layers.hpp"

namespace lrpca::nn {

struct GradCheckOptions {
  double step = 1e-5;                   // central-difference step h
  std::size_t samples_per_tensor = 6;   // entries probed per trainable tensor
  std::size_t input_samples = 12;       // input entries probed
  /// Pass threshold on the worst relative error. Probes whose h and h/2
  /// differences already disagree by more than this straddle a ReLU kink
  /// and are skipped rather than scored.
  double tolerance = 1e-4;
  /// |a - n| / max(|a|, |n|, floor); the floor is raised to
  /// resolution / tolerance when the loss is too large to resolve it.
  double denominator_floor = 1e-6;
  Mode mode = Mode::train;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_entry;   // "<param>[i]" or "input[i]"
  std::size_t checked = 0;
  std::size_t skipped = 0;
  /// eps * sum|R * out| / h: the smallest derivative a central difference
  /// of this loss can resolve.
  double resolution = 0.0;
  bool passed = false;
};

/// Compares reverse-mode gradients of L = sum(R * net(x)), R ~ N(0, 1) fixed,
/// against central finite differences over a sample of parameter and input
/// entries. Non-finite loss values while probing raise NumericError.
/// Parameter gradients of `network` are left zeroed; in train mode batchnorm
/// running statistics are updated by the probing forwards.
GradCheckReport grad_check(Layer<double>& network, const Array4<double>& input,
                           const GradCheckOptions& options = {});

}  // namespace lrpca::nn
