#pragma once

#include <cstddef>

#include "lrpca/model/config.hpp"
#include "lrpca/nn/layers.hpp"

namespace lrpca::model {

using nn::Array4;
using nn::Mode;

/// Squeeze-and-excitation: per-channel mean -> dense(C -> C/r) -> relu ->
/// dense(C/r -> C) -> sigmoid, then each channel is scaled by its gate.
template <typename T>
class SEBlock final : public nn::Layer<T> {
 public:
  SEBlock(std::size_t channels, std::size_t ratio);

  Array4<T> forward(const Array4<T>& input, Mode mode) override;
  Array4<T> infer(const Array4<T>& input) const override;
  Array4<T> backward(const Array4<T>& grad_out) override;
  nn::ParameterList<T> parameters() override;
  std::string kind() const override { return "se"; }

  void init_kaiming(nn::Rng& rng);
  /// Channel gates in (0, 1) for `input`, shape (N, C, 1, 1).
  Array4<T> gates(const Array4<T>& input) const;

  std::size_t channels() const noexcept { return channels_; }
  nn::Dense<T>& squeeze() noexcept { return fc1_; }
  nn::Dense<T>& excite() noexcept { return fc2_; }

 private:
  void check_channels(const nn::Shape4& s) const;

  std::size_t channels_;
  nn::Dense<T> fc1_;
  nn::Activation<T> relu_{nn::ActivationKind::relu};
  nn::Dense<T> fc2_;
  nn::Activation<T> sigmoid_{nn::ActivationKind::sigmoid};

  Array4<T> input_;
  Array4<T> gates_;
};

/// Residual branch of the background, target and noise modules:
/// conv(1->BC) -> conv(BC->C) -> fill x conv(C->C) -> [SE] -> conv(C->1),
/// each hidden conv followed by [batchnorm] and relu. The final conv starts
/// at zero so the branch is initially the zero map.
template <typename T>
nn::Sequential<T> make_branch_group(const ModelConfig& config, bool batchnorm, bool se,
                                    nn::Rng& rng);

/// Reconstruction network: conv(1->C) + relu -> l_D x [conv(C->C) + relu] ->
/// [SE] -> conv(C->1), all Kaiming-initialized.
template <typename T>
nn::Sequential<T> make_reconstruction_group(const ModelConfig& config, bool se, nn::Rng& rng);

}  // namespace lrpca::model
