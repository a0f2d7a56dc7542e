#include "lrpca/nn/layers.hpp"

#include <cmath>

namespace lrpca::nn {

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(std::size_t in_channels, std::size_t out_channels)
    : weight_("weight", Array4<T>({out_channels, in_channels, 3, 3})),
      bias_("bias", Array4<T>(Shape4::vec(out_channels))) {}

template <typename T>
void Conv2d<T>::init_kaiming(Rng& rng) {
  kaiming_normal(weight_.value, weight_.value.shape().c * 9, rng);
  bias_.value.fill(T{0});
}

template <typename T>
void Conv2d<T>::init_zero() {
  weight_.value.fill(T{0});
  bias_.value.fill(T{0});
}

template <typename T>
Array4<T> Conv2d<T>::forward(const Array4<T>& input, Mode) {
  input_ = input;
  return infer(input);
}

template <typename T>
Array4<T> Conv2d<T>::infer(const Array4<T>& input) const {
  return conv2d(input, weight_.value, bias_.value);
}

template <typename T>
Array4<T> Conv2d<T>::backward(const Array4<T>& grad_out) {
  return conv2d_backward(input_, weight_.value, grad_out, weight_.grad, bias_.grad);
}

// ----------------------------------------------------------- BatchNorm2d

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::size_t channels, double momentum, double eps)
    : gamma_("gamma", Array4<T>(Shape4::vec(channels), T{1})),
      beta_("beta", Array4<T>(Shape4::vec(channels))),
      running_mean_("running_mean", Array4<T>(Shape4::vec(channels)), false),
      running_var_("running_var", Array4<T>(Shape4::vec(channels), T{1}), false),
      momentum_(momentum),
      eps_(eps) {
  if (!(eps > 0.0)) throw ConfigError("batchnorm: eps must be positive");
  if (!(momentum > 0.0 && momentum < 1.0)) {
    throw ConfigError("batchnorm: momentum must lie in (0, 1)");
  }
}

template <typename T>
void BatchNorm2d<T>::check_channels(const Shape4& s) const {
  if (s.c != gamma_.value.size()) {
    throw ShapeError("batchnorm: input has " + std::to_string(s.c) +
                         " channels, parameters have " + std::to_string(gamma_.value.size()),
                     "channels");
  }
  if (s.n * s.plane() == 0) throw ShapeError("batchnorm: empty input " + s.str(), "size");
}

template <typename T>
Array4<T> BatchNorm2d<T>::infer(const Array4<T>& input) const {
  const Shape4 s = input.shape();
  check_channels(s);
  Array4<T> out(s);
  for (std::size_t c = 0; c < s.c; ++c) {
    const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var_.value[c]) + eps_));
    const T scale = gamma_.value[c] * inv;
    const T shift = beta_.value[c] - running_mean_.value[c] * scale;
    for (std::size_t n = 0; n < s.n; ++n) {
      const auto src = input.plane(n, c);
      auto dst = out.plane(n, c);
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] * scale + shift;
    }
  }
  return out;
}

template <typename T>
Array4<T> BatchNorm2d<T>::forward(const Array4<T>& input, Mode mode) {
  const Shape4 s = input.shape();
  check_channels(s);
  last_mode_ = mode;
  normalized_ = Array4<T>(s);
  inv_std_.assign(s.c, T{0});
  Array4<T> out(s);
  const double count = static_cast<double>(s.n * s.plane());

  for (std::size_t c = 0; c < s.c; ++c) {
    double mean = 0.0;
    double var = 0.0;
    if (mode == Mode::train) {
      for (std::size_t n = 0; n < s.n; ++n) {
        for (T v : input.plane(n, c)) mean += static_cast<double>(v);
      }
      mean /= count;
      for (std::size_t n = 0; n < s.n; ++n) {
        for (T v : input.plane(n, c)) {
          const double d = static_cast<double>(v) - mean;
          var += d * d;
        }
      }
      var /= count;
      const double unbiased = count > 1.0 ? var * count / (count - 1.0) : var;
      running_mean_.value[c] =
          static_cast<T>((1.0 - momentum_) * running_mean_.value[c] + momentum_ * mean);
      running_var_.value[c] =
          static_cast<T>((1.0 - momentum_) * running_var_.value[c] + momentum_ * unbiased);
    } else {
      mean = static_cast<double>(running_mean_.value[c]);
      var = static_cast<double>(running_var_.value[c]);
    }
    const T inv = static_cast<T>(1.0 / std::sqrt(var + eps_));
    const T m = static_cast<T>(mean);
    inv_std_[c] = inv;
    for (std::size_t n = 0; n < s.n; ++n) {
      const auto src = input.plane(n, c);
      auto xhat = normalized_.plane(n, c);
      auto dst = out.plane(n, c);
      for (std::size_t i = 0; i < src.size(); ++i) {
        xhat[i] = (src[i] - m) * inv;
        dst[i] = gamma_.value[c] * xhat[i] + beta_.value[c];
      }
    }
  }
  // eval output goes through infer so both paths agree bit for bit
  if (mode == Mode::eval) return infer(input);
  return out;
}

template <typename T>
Array4<T> BatchNorm2d<T>::backward(const Array4<T>& grad_out) {
  const Shape4 s = normalized_.shape();
  require_same_shape(grad_out.shape(), s, "batchnorm backward");
  Array4<T> grad_in(s);
  const double count = static_cast<double>(s.n * s.plane());
  for (std::size_t c = 0; c < s.c; ++c) {
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
      const auto dy = grad_out.plane(n, c);
      const auto xhat = normalized_.plane(n, c);
      for (std::size_t i = 0; i < dy.size(); ++i) {
        sum_dy += static_cast<double>(dy[i]);
        sum_dy_xhat += static_cast<double>(dy[i]) * xhat[i];
      }
    }
    gamma_.grad[c] += static_cast<T>(sum_dy_xhat);
    beta_.grad[c] += static_cast<T>(sum_dy);
    const T scale = gamma_.value[c] * inv_std_[c];
    if (last_mode_ == Mode::eval) {
      for (std::size_t n = 0; n < s.n; ++n) {
        const auto dy = grad_out.plane(n, c);
        auto dx = grad_in.plane(n, c);
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = scale * dy[i];
      }
      continue;
    }
    const T mean_dy = static_cast<T>(sum_dy / count);
    const T mean_dy_xhat = static_cast<T>(sum_dy_xhat / count);
    for (std::size_t n = 0; n < s.n; ++n) {
      const auto dy = grad_out.plane(n, c);
      const auto xhat = normalized_.plane(n, c);
      auto dx = grad_in.plane(n, c);
      for (std::size_t i = 0; i < dy.size(); ++i) {
        dx[i] = scale * (dy[i] - mean_dy - xhat[i] * mean_dy_xhat);
      }
    }
  }
  return grad_in;
}

// ------------------------------------------------------------ Activation

template <typename T>
Array4<T> Activation<T>::forward(const Array4<T>& input, Mode) {
  output_ = activation(input, kind_);
  return output_;
}

template <typename T>
Array4<T> Activation<T>::backward(const Array4<T>& grad_out) {
  return activation_backward(output_, grad_out, kind_);
}

// --------------------------------------------------------- GlobalAvgPool

template <typename T>
Array4<T> GlobalAvgPool<T>::forward(const Array4<T>& input, Mode) {
  input_shape_ = input.shape();
  return global_avg_pool(input);
}

template <typename T>
Array4<T> GlobalAvgPool<T>::backward(const Array4<T>& grad_out) {
  return global_avg_pool_backward(input_shape_, grad_out);
}

// ----------------------------------------------------------------- Dense

template <typename T>
Dense<T>::Dense(std::size_t in_features, std::size_t out_features)
    : weight_("weight", Array4<T>({out_features, in_features, 1, 1})),
      bias_("bias", Array4<T>(Shape4::vec(out_features))) {}

template <typename T>
void Dense<T>::init_kaiming(Rng& rng) {
  kaiming_normal(weight_.value, weight_.value.shape().c, rng);
  bias_.value.fill(T{0});
}

template <typename T>
Array4<T> Dense<T>::forward(const Array4<T>& input, Mode) {
  input_ = input;
  return infer(input);
}

template <typename T>
Array4<T> Dense<T>::infer(const Array4<T>& input) const {
  return dense(input, weight_.value, bias_.value);
}

template <typename T>
Array4<T> Dense<T>::backward(const Array4<T>& grad_out) {
  return dense_backward(input_, weight_.value, grad_out, weight_.grad, bias_.grad);
}

// ------------------------------------------------------------ Sequential

template <typename T>
Array4<T> Sequential<T>::forward(const Array4<T>& input, Mode mode) {
  Array4<T> x = input;
  for (auto& [name, layer] : layers_) x = layer->forward(x, mode);
  return x;
}

template <typename T>
Array4<T> Sequential<T>::infer(const Array4<T>& input) const {
  Array4<T> x = input;
  for (const auto& [name, layer] : layers_) x = layer->infer(x);
  return x;
}

template <typename T>
Array4<T> Sequential<T>::backward(const Array4<T>& grad_out) {
  Array4<T> g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = it->second->backward(g);
  return g;
}

template <typename T>
ParameterList<T> Sequential<T>::parameters() {
  ParameterList<T> out;
  for (auto& [name, layer] : layers_) {
    for (auto* p : layer->parameters()) out.push_back(p);
  }
  return out;
}

template class Conv2d<float>;
template class Conv2d<double>;
template class BatchNorm2d<float>;
template class BatchNorm2d<double>;
template class Activation<float>;
template class Activation<double>;
template class GlobalAvgPool<float>;
template class GlobalAvgPool<double>;
template class Dense<float>;
template class Dense<double>;
template class Sequential<float>;
template class Sequential<double>;

}  // namespace lrpca::nn
