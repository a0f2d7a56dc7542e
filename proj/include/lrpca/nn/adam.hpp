#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "lrpca/nn/parameter.hpp"

namespace lrpca::nn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// Adam with bias correction. Moments are keyed by parameter name and created
/// (as zeros) the first time a trainable parameter is stepped.
template <typename T>
class Adam {
 public:
  struct Moments {
    Array4<T> m;
    Array4<T> v;
  };

  explicit Adam(AdamConfig config = {});

  /// One update of every trainable parameter in `params`. Gradients are
  /// validated first; a non-finite entry throws NumericError naming the
  /// parameter and leaves all values and state untouched.
  void step(const ParameterList<T>& params);

  std::int64_t steps() const noexcept { return t_; }
  const AdamConfig& config() const noexcept { return config_; }

  /// Moments of `param`, zeros if it has never been stepped.
  Moments moments_for(const Parameter<T>& param) const;
  const std::map<std::string, Moments>& moments() const noexcept { return moments_; }

  /// Replaces the full optimizer state (used by checkpoint loading).
  void restore(std::int64_t steps, std::map<std::string, Moments> moments);

 private:
  AdamConfig config_;
  std::int64_t t_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace lrpca::nn
