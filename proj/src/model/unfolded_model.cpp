#include "lrpca/model/unfolded_model.hpp"

namespace lrpca::model {

template <typename Real>
UnfoldedModel<Real>::UnfoldedModel(const ModelConfig& config, std::uint64_t seed)
    : config_(config) {
  config_.validate();
  nn::Rng rng(seed);
  stages_.reserve(config_.stages);
  for (std::size_t k = 0; k < config_.stages; ++k) stages_.emplace_back(config_, k, rng);
  nn::require_unique_names(parameters());
}

template <typename Real>
ModelOutput<Real> UnfoldedModel<Real>::infer(const Array4<Real>& image, bool keep_trace) const {
  auto state = DecompositionState<Real>::initial(image);
  ModelOutput<Real> out;
  if (keep_trace) out.trace.emplace();
  for (const auto& stage : stages_) {
    state = stage.infer(state);
    if (keep_trace) out.trace->push_back(state);
  }
  out.target = std::move(state.T);
  out.reconstruction = std::move(state.D);
  return out;
}

template <typename Real>
ModelOutput<Real> UnfoldedModel<Real>::forward(const Array4<Real>& image, Mode mode,
                                               bool keep_trace) {
  auto state = DecompositionState<Real>::initial(image);
  input_shape_ = image.shape();
  ModelOutput<Real> out;
  if (keep_trace) out.trace.emplace();
  for (auto& stage : stages_) {
    state = stage.forward(state, mode);
    if (keep_trace) out.trace->push_back(state);
  }
  out.target = std::move(state.T);
  out.reconstruction = std::move(state.D);
  return out;
}

template <typename Real>
Array4<Real> UnfoldedModel<Real>::backward(const Array4<Real>& grad_target,
                                           const Array4<Real>& grad_reconstruction) {
  nn::require_same_shape(grad_target.shape(), input_shape_, "model backward (target)");
  nn::require_same_shape(grad_reconstruction.shape(), input_shape_,
                         "model backward (reconstruction)");
  StateGrad<Real> g{grad_reconstruction, grad_target, Array4<Real>(input_shape_)};
  for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) g = it->backward(g);
  // D0 is the image; T0 and N0 are constants.
  return g.D;
}

template <typename Real>
nn::ParameterList<Real> UnfoldedModel<Real>::parameters() {
  nn::ParameterList<Real> out;
  for (auto& stage : stages_) {
    for (auto* p : stage.parameters()) out.push_back(p);
  }
  return out;
}

template <typename Real>
void UnfoldedModel<Real>::zero_grad() {
  nn::zero_grads(parameters());
}

namespace {

template <typename Real>
Array4<Real> stack_channels(const Array4<Real>& a, const Array4<Real>& b) {
  const nn::Shape4 s = a.shape();
  Array4<Real> out({s.n, 2, s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n) {
    std::copy(a.plane(n, 0).begin(), a.plane(n, 0).end(), out.plane(n, 0).begin());
    std::copy(b.plane(n, 0).begin(), b.plane(n, 0).end(), out.plane(n, 1).begin());
  }
  return out;
}

}  // namespace

template <typename Real>
Array4<Real> StackedOutputAdapter<Real>::forward(const Array4<Real>& input, Mode mode) {
  auto out = model_.forward(input, mode);
  return stack_channels(out.target, out.reconstruction);
}

template <typename Real>
Array4<Real> StackedOutputAdapter<Real>::infer(const Array4<Real>& input) const {
  auto out = model_.infer(input);
  return stack_channels(out.target, out.reconstruction);
}

template <typename Real>
Array4<Real> StackedOutputAdapter<Real>::backward(const Array4<Real>& grad_out) {
  const nn::Shape4 s = grad_out.shape();
  if (s.c != 2) throw ShapeError("stacked output gradient must have 2 channels", "channels");
  Array4<Real> gt({s.n, 1, s.h, s.w});
  Array4<Real> gd({s.n, 1, s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n) {
    std::copy(grad_out.plane(n, 0).begin(), grad_out.plane(n, 0).end(), gt.plane(n, 0).begin());
    std::copy(grad_out.plane(n, 1).begin(), grad_out.plane(n, 1).end(), gd.plane(n, 0).begin());
  }
  return model_.backward(gt, gd);
}

template class UnfoldedModel<float>;
template class UnfoldedModel<double>;
template class StackedOutputAdapter<float>;
template class StackedOutputAdapter<double>;

}  // namespace lrpca::model
