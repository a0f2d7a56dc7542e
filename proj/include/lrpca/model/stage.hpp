#pragma once

#include <cstddef>

#include "lrpca/model/blocks.hpp"
#include "lrpca/model/config.hpp"
#include "lrpca/nn/layers.hpp"

namespace lrpca::model {

/// Mixing constants of the target and noise updates. They are absorbed into
/// the learned step sizes and kept here only for reference.
inline constexpr double kGamma = 0.5;
inline constexpr double kDelta = 0.5;

/// Image-space components after a stage: reconstruction D, background B,
/// targets T, noise N, all batch x 1 x H x W.
template <typename Real>
struct DecompositionState {
  Array4<Real> D;
  Array4<Real> B;
  Array4<Real> T;
  Array4<Real> N;
  std::size_t stage_index = 0;

  /// Stage-0 state: D = B = image, T = N = 0.
  static DecompositionState initial(const Array4<Real>& image);
  /// Throws ShapeError unless all four planes share one single-channel shape.
  void check() const;
};

/// Gradients w.r.t. the (D, T, N) carried between stages.
template <typename Real>
struct StateGrad {
  Array4<Real> D;
  Array4<Real> T;
  Array4<Real> N;
};

/// One unfolding stage: background, target, noise and reconstruction modules.
template <typename Real>
class Stage {
 public:
  Stage(const ModelConfig& config, std::size_t index, nn::Rng& rng);
  Stage(Stage&&) noexcept = default;
  Stage& operator=(Stage&&) noexcept = default;

  // Module maps (eval mode, const).
  /// B = R + W(R), R = D - T - N.
  Array4<Real> background(const DecompositionState<Real>& s) const;
  /// T' = U - eps * H(U), U = T + D - B' - N.
  Array4<Real> target(const DecompositionState<Real>& s, const Array4<Real>& b_next) const;
  /// N' = V - sigma * F(V), V = N + D - B' - T'.
  Array4<Real> noise(const DecompositionState<Real>& s, const Array4<Real>& b_next,
                  const Array4<Real>& t_next) const;
  /// D' = M(B' + T' + N').
  Array4<Real> reconstruct(const Array4<Real>& b_next, const Array4<Real>& t_next,
                        const Array4<Real>& n_next) const;

  DecompositionState<Real> infer(const DecompositionState<Real>& s) const;
  /// Records what backward needs.
  DecompositionState<Real> forward(const DecompositionState<Real>& s, Mode mode);
  /// Gradient of the outgoing (D', T', N') -> incoming (D, T, N); accumulates
  /// parameter gradients. B' is internal to the stage.
  StateGrad<Real> backward(const StateGrad<Real>& g);

  nn::ParameterList<Real> parameters();

  /// The learned map of one module: W, H, F or M.
  nn::Sequential<Real>& group(ModuleKind kind);
  const nn::Sequential<Real>& group(ModuleKind kind) const;
  nn::Parameter<Real>& epsilon() noexcept { return epsilon_; }
  nn::Parameter<Real>& sigma() noexcept { return sigma_; }
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
  nn::Sequential<Real> w_;  // background residual
  nn::Sequential<Real> h_;  // target gradient network
  nn::Sequential<Real> f_;  // noise gradient network
  nn::Sequential<Real> m_;  // reconstruction
  nn::Parameter<Real> epsilon_;
  nn::Parameter<Real> sigma_;

  Array4<Real> h_of_u_;
  Array4<Real> f_of_v_;
};

}  // namespace lrpca::model
