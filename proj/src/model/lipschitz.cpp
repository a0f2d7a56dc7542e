#include "lrpca/model/lipschitz.hpp"

#include <cmath>
#include <vector>

namespace lrpca::model {

template <typename Real>
LipschitzEstimate estimate_lipschitz(nn::Layer<Real>& g, const LipschitzOptions& options) {
  if (options.probe_count < 2) throw ConfigError("lipschitz: probe_count must be at least 2");
  if (!(options.separation > 0.0)) throw ConfigError("lipschitz: separation must be positive");
  const nn::Shape4 shape = options.probe_shape;
  if (shape.c != 1 || shape.size() == 0) {
    throw ShapeError("lipschitz: probes must be non-empty single-channel planes", "channels");
  }

  auto params = g.parameters();
  std::vector<Array4<Real>> saved;
  saved.reserve(params.size());
  for (auto* p : params) saved.push_back(p->grad);

  LipschitzEstimate result;
  const double step = options.separation * std::sqrt(static_cast<double>(shape.size()));
  for (std::size_t probe = 0; probe < options.probe_count; ++probe) {
    nn::Rng rng(nn::derive_seed(options.seed, probe));
    Array4<Real> x1(shape);
    for (Real& v : x1.values()) v = static_cast<Real>(rng.uniform());
    Array4<Real> d(shape);
    for (Real& v : d.values()) v = static_cast<Real>(rng.normal());
    const Array4<Real> y1 = g.infer(x1);

    for (std::size_t it = 0; it <= options.power_steps; ++it) {
      const double norm = nn::frobenius_norm(d);
      if (!(norm > 0.0) || !std::isfinite(norm)) break;
      d *= static_cast<Real>(step / norm);
      const Array4<Real> x2 = x1 + d;
      const double dx = nn::frobenius_norm(x2 - x1);
      if (!(dx > 0.0)) break;  // coincident pair
      const Array4<Real> diff = g.forward(x2, Mode::eval) - y1;
      const double q = nn::frobenius_norm(diff) / dx;
      if (!std::isfinite(q)) throw NumericError("lipschitz: non-finite difference quotient");
      result.estimate = std::max(result.estimate, q);
      ++result.sample_count;
      if (it < options.power_steps) d = g.backward(diff);
    }
  }

  for (std::size_t i = 0; i < params.size(); ++i) params[i]->grad = std::move(saved[i]);
  if (result.sample_count == 0) throw NumericError("lipschitz: every probe pair coincided");
  return result;
}

template <typename Real>
LipschitzEstimate estimate_lipschitz(UnfoldedModel<Real>& model, ModuleKind module,
                                     std::size_t stage, const LipschitzOptions& options) {
  if (module != ModuleKind::target && module != ModuleKind::noise) {
    throw ConfigError("lipschitz: only the target and noise modules are monitored");
  }
  if (stage >= model.stage_count()) {
    throw ConfigError("lipschitz: stage " + std::to_string(stage) + " out of range");
  }
  auto est = estimate_lipschitz<Real>(model.stage(stage).group(module), options);
  est.module = module;
  est.stage_index = stage;
  return est;
}

template LipschitzEstimate estimate_lipschitz<float>(nn::Layer<float>&, const LipschitzOptions&);
template LipschitzEstimate estimate_lipschitz<double>(nn::Layer<double>&, const LipschitzOptions&);
template LipschitzEstimate estimate_lipschitz<float>(UnfoldedModel<float>&, ModuleKind,
                                                     std::size_t, const LipschitzOptions&);
template LipschitzEstimate estimate_lipschitz<double>(UnfoldedModel<double>&, ModuleKind,
                                                      std::size_t, const LipschitzOptions&);

}  // namespace lrpca::model
