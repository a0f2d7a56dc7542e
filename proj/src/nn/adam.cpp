#include "lrpca/nn/adam.hpp"

#include <cmath>

namespace lrpca::nn {

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("adam: learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("adam: beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam: beta2 must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("adam: epsilon must be positive");
}

template <typename T>
Adam<T>::Adam(AdamConfig config) : config_(config) {
  config_.validate();
}

template <typename T>
typename Adam<T>::Moments Adam<T>::moments_for(const Parameter<T>& param) const {
  if (auto it = moments_.find(param.name); it != moments_.end()) return it->second;
  return {Array4<T>(param.value.shape()), Array4<T>(param.value.shape())};
}

template <typename T>
void Adam<T>::restore(std::int64_t steps, std::map<std::string, Moments> moments) {
  if (steps < 0) throw ConfigError("adam: negative step count");
  t_ = steps;
  moments_ = std::move(moments);
}

template <typename T>
void Adam<T>::step(const ParameterList<T>& params) {
  for (const auto* p : params) {
    if (!p->trainable) continue;
    require_same_shape(p->grad.shape(), p->value.shape(), "adam gradient of " + p->name);
    if (!p->grad.all_finite()) {
      throw NumericError("adam: non-finite gradient in parameter '" + p->name + "'");
    }
    if (auto it = moments_.find(p->name); it != moments_.end()) {
      require_same_shape(it->second.m.shape(), p->value.shape(), "adam state of " + p->name);
    }
  }

  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(t_));

  for (auto* p : params) {
    if (!p->trainable) continue;
    auto [it, inserted] = moments_.try_emplace(
        p->name, Moments{Array4<T>(p->value.shape()), Array4<T>(p->value.shape())});
    auto& [m, v] = it->second;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = static_cast<double>(p->grad[i]);
      const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * g;
      const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double m_hat = mi / correction1;
      const double v_hat = vi / correction2;
      const double delta = config_.lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
      p->value[i] = static_cast<T>(static_cast<double>(p->value[i]) - delta);
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace lrpca::nn
