#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "lrpca/model/stage.hpp"

namespace lrpca::model {

/// Per-stage record of (D, B, T, N); entry k holds the output of stage k+1.
template <typename Real>
using DecompositionTrace = std::vector<DecompositionState<Real>>;

template <typename Real>
struct ModelOutput {
  Array4<Real> target;          // T^K, unbounded; sigmoid(T^K) is the segmentation map
  Array4<Real> reconstruction;  // D^K
  std::optional<DecompositionTrace<Real>> trace;
};

/// K-stage unfolded network. Stage 0 state is D = image, T = N = 0.
template <typename Real>
class UnfoldedModel {
 public:
  /// Weights are drawn from a generator seeded with `seed`.
  UnfoldedModel(const ModelConfig& config, std::uint64_t seed);
  UnfoldedModel(UnfoldedModel&&) noexcept = default;
  UnfoldedModel& operator=(UnfoldedModel&&) noexcept = default;

  /// Eval-mode pass; const and safe to call concurrently.
  ModelOutput<Real> infer(const Array4<Real>& image, bool keep_trace = false) const;
  /// Records what backward needs; train mode uses batch statistics.
  ModelOutput<Real> forward(const Array4<Real>& image, Mode mode, bool keep_trace = false);
  /// Accumulates parameter gradients for dL/dT^K and dL/dD^K of the last
  /// forward; returns dL/dimage.
  Array4<Real> backward(const Array4<Real>& grad_target, const Array4<Real>& grad_reconstruction);

  /// Every parameter, including non-trainable batchnorm statistics, in a
  /// fixed order with unique names.
  nn::ParameterList<Real> parameters();
  void zero_grad();

  const ModelConfig& config() const noexcept { return config_; }
  std::size_t stage_count() const noexcept { return stages_.size(); }
  Stage<Real>& stage(std::size_t k) { return stages_.at(k); }
  const Stage<Real>& stage(std::size_t k) const { return stages_.at(k); }

 private:
  ModelConfig config_;
  std::vector<Stage<Real>> stages_;
  nn::Shape4 input_shape_{};
};

/// Exposes a model as a Layer whose output stacks (T^K, D^K) on the channel
/// axis, so grad_check can probe it.
template <typename Real>
class StackedOutputAdapter final : public nn::Layer<Real> {
 public:
  explicit StackedOutputAdapter(UnfoldedModel<Real>& model) : model_(model) {}

  Array4<Real> forward(const Array4<Real>& input, Mode mode) override;
  Array4<Real> infer(const Array4<Real>& input) const override;
  Array4<Real> backward(const Array4<Real>& grad_out) override;
  nn::ParameterList<Real> parameters() override { return model_.parameters(); }
  std::string kind() const override { return "unfolded_model"; }

 private:
  UnfoldedModel<Real>& model_;
};

}  // namespace lrpca::model
