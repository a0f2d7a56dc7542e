#include "lrpca/model/stage.hpp"

namespace lrpca::model {

using nn::Shape4;

template <typename Real>
DecompositionState<Real> DecompositionState<Real>::initial(const Array4<Real>& image) {
  if (image.shape().c != 1) {
    throw ShapeError("model input must have 1 channel, got " + image.shape().str(), "channels");
  }
  DecompositionState s;
  s.D = image;
  s.B = image;
  s.T = Array4<Real>(image.shape());
  s.N = Array4<Real>(image.shape());
  s.stage_index = 0;
  return s;
}

template <typename Real>
void DecompositionState<Real>::check() const {
  if (D.shape().c != 1) throw ShapeError("state planes must have 1 channel", "channels");
  nn::require_same_shape(B.shape(), D.shape(), "state B");
  nn::require_same_shape(T.shape(), D.shape(), "state T");
  nn::require_same_shape(N.shape(), D.shape(), "state N");
}

template <typename Real>
Stage<Real>::Stage(const ModelConfig& config, std::size_t index, nn::Rng& rng)
    : index_(index),
      w_(make_branch_group<Real>(config, true, config.se.background, rng)),
      h_(make_branch_group<Real>(config, false, config.se.target, rng)),
      f_(make_branch_group<Real>(config, false, config.se.noise, rng)),
      m_(make_reconstruction_group<Real>(config, config.se.reconstruction, rng)),
      epsilon_("epsilon", Array4<Real>(Shape4::vec(1), static_cast<Real>(config.epsilon_init))),
      sigma_("sigma", Array4<Real>(Shape4::vec(1), static_cast<Real>(config.sigma_init))) {
  const std::string prefix = "stage" + std::to_string(index);
  for (ModuleKind kind : kAllModules) {
    auto params = group(kind).parameters();
    nn::prefix_names(params, prefix + "." + std::string(to_string(kind)));
  }
  epsilon_.name = prefix + ".epsilon";
  sigma_.name = prefix + ".sigma";
}

template <typename Real>
nn::Sequential<Real>& Stage<Real>::group(ModuleKind kind) {
  switch (kind) {
    case ModuleKind::background: return w_;
    case ModuleKind::target: return h_;
    case ModuleKind::noise: return f_;
    case ModuleKind::reconstruction: return m_;
  }
  throw ConfigError("unknown module kind");
}

template <typename Real>
const nn::Sequential<Real>& Stage<Real>::group(ModuleKind kind) const {
  return const_cast<Stage*>(this)->group(kind);
}

template <typename Real>
nn::ParameterList<Real> Stage<Real>::parameters() {
  nn::ParameterList<Real> out;
  for (ModuleKind kind : kAllModules) {
    for (auto* p : group(kind).parameters()) out.push_back(p);
  }
  out.push_back(&epsilon_);
  out.push_back(&sigma_);
  return out;
}

template <typename Real>
Array4<Real> Stage<Real>::background(const DecompositionState<Real>& s) const {
  s.check();
  const Array4<Real> r = s.D - s.T - s.N;
  return r + w_.infer(r);
}

template <typename Real>
Array4<Real> Stage<Real>::target(const DecompositionState<Real>& s,
                                 const Array4<Real>& b_next) const {
  s.check();
  nn::require_same_shape(b_next.shape(), s.D.shape(), "target module B");
  const Array4<Real> u = s.T + s.D - b_next - s.N;
  return u - epsilon_.value[0] * h_.infer(u);
}

template <typename Real>
Array4<Real> Stage<Real>::noise(const DecompositionState<Real>& s, const Array4<Real>& b_next,
                                const Array4<Real>& t_next) const {
  s.check();
  nn::require_same_shape(b_next.shape(), s.D.shape(), "noise module B");
  nn::require_same_shape(t_next.shape(), s.D.shape(), "noise module T");
  const Array4<Real> v = s.N + s.D - b_next - t_next;
  return v - sigma_.value[0] * f_.infer(v);
}

template <typename Real>
Array4<Real> Stage<Real>::reconstruct(const Array4<Real>& b_next, const Array4<Real>& t_next,
                                      const Array4<Real>& n_next) const {
  nn::require_same_shape(t_next.shape(), b_next.shape(), "reconstruction T");
  nn::require_same_shape(n_next.shape(), b_next.shape(), "reconstruction N");
  return m_.infer(b_next + t_next + n_next);
}

template <typename Real>
DecompositionState<Real> Stage<Real>::infer(const DecompositionState<Real>& s) const {
  DecompositionState<Real> out;
  out.B = background(s);
  out.T = target(s, out.B);
  out.N = noise(s, out.B, out.T);
  out.D = reconstruct(out.B, out.T, out.N);
  out.stage_index = s.stage_index + 1;
  return out;
}

template <typename Real>
DecompositionState<Real> Stage<Real>::forward(const DecompositionState<Real>& s, Mode mode) {
  s.check();
  DecompositionState<Real> out;
  const Array4<Real> r = s.D - s.T - s.N;
  out.B = r + w_.forward(r, mode);
  const Array4<Real> u = s.T + s.D - out.B - s.N;
  h_of_u_ = h_.forward(u, mode);
  out.T = u - epsilon_.value[0] * h_of_u_;
  const Array4<Real> v = s.N + s.D - out.B - out.T;
  f_of_v_ = f_.forward(v, mode);
  out.N = v - sigma_.value[0] * f_of_v_;
  out.D = m_.forward(out.B + out.T + out.N, mode);
  out.stage_index = s.stage_index + 1;
  return out;
}

template <typename Real>
StateGrad<Real> Stage<Real>::backward(const StateGrad<Real>& g) {
  const Real eps = epsilon_.value[0];
  const Real sig = sigma_.value[0];

  const Array4<Real> g_s = m_.backward(g.D);
  Array4<Real> g_b = g_s;
  Array4<Real> g_t = g.T + g_s;
  const Array4<Real> g_n = g.N + g_s;

  sigma_.grad[0] -= static_cast<Real>(nn::dot(g_n, f_of_v_));
  // N' = V - sigma F(V): the branch sees upstream gradient -sigma g_n
  const Array4<Real> g_v = g_n + f_.backward(-sig * g_n);
  StateGrad<Real> in{g_v, Array4<Real>(g_v.shape()), g_v};
  g_b -= g_v;
  g_t -= g_v;

  epsilon_.grad[0] -= static_cast<Real>(nn::dot(g_t, h_of_u_));
  const Array4<Real> g_u = g_t + h_.backward(-eps * g_t);
  in.T += g_u;
  in.D += g_u;
  g_b -= g_u;
  in.N -= g_u;

  const Array4<Real> g_r = g_b + w_.backward(g_b);
  in.D += g_r;
  in.T -= g_r;
  in.N -= g_r;
  return in;
}

template struct DecompositionState<float>;
template struct DecompositionState<double>;
template class Stage<float>;
template class Stage<double>;

}  // namespace lrpca::model
