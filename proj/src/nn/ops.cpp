#include "lrpca/nn/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <string>
#include <vector>

namespace lrpca::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr std::size_t kTaps = 9;

void check_conv_shapes(const Shape4& in, const Shape4& weight, const Shape4& bias) {
  if (weight.h != 3 || weight.w != 3) {
    throw ShapeError("conv2d: kernel must be 3x3, got " + weight.str(), "kernel");
  }
  if (in.c != weight.c) {
    throw ShapeError("conv2d: input has " + std::to_string(in.c) + " channels, kernel expects " +
                         std::to_string(weight.c),
                     "channels");
  }
  if (bias.size() != weight.n) {
    throw ShapeError("conv2d: bias length " + std::to_string(bias.size()) +
                         " does not match " + std::to_string(weight.n) + " output channels",
                     "bias");
  }
  if (in.h == 0 || in.w == 0) {
    throw ShapeError("conv2d: empty spatial extent " + in.str(), in.h == 0 ? "height" : "width");
  }
}

// cols is (in * 9) x (h * w), row index = ci * 9 + ky * 3 + kx.
template <typename T>
void im2col(const T* src, std::size_t channels, std::size_t h, std::size_t w, T* cols) {
  const std::size_t hw = h * w;
  for (std::size_t ci = 0; ci < channels; ++ci) {
    const T* plane = src + ci * hw;
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        T* row = cols + (ci * kTaps + ky * 3 + kx) * hw;
        for (std::size_t y = 0; y < h; ++y) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - 1;
          T* dst = row + y * w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(dst, dst + w, T{0});
            continue;
          }
          const T* line = plane + static_cast<std::size_t>(iy) * w;
          for (std::size_t x = 0; x < w; ++x) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + kx) - 1;
            dst[x] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) ? T{0}
                                                                       : line[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, std::size_t channels, std::size_t h, std::size_t w, T* dst) {
  const std::size_t hw = h * w;
  for (std::size_t ci = 0; ci < channels; ++ci) {
    T* plane = dst + ci * hw;
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        const T* row = cols + (ci * kTaps + ky * 3 + kx) * hw;
        for (std::size_t y = 0; y < h; ++y) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - 1;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          T* line = plane + static_cast<std::size_t>(iy) * w;
          const T* src = row + y * w;
          for (std::size_t x = 0; x < w; ++x) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + kx) - 1;
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) line[ix] += src[x];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Array4<T> conv2d(const Array4<T>& input, const Array4<T>& weight, const Array4<T>& bias) {
  const Shape4 s = input.shape();
  check_conv_shapes(s, weight.shape(), bias.shape());
  const std::size_t out_ch = weight.shape().n;
  const std::size_t k = s.c * kTaps;
  const std::size_t hw = s.plane();
  Array4<T> out({s.n, out_ch, s.h, s.w});
  const Eigen::Map<const RowMat<T>> wm(weight.data(), static_cast<Eigen::Index>(out_ch),
                                       static_cast<Eigen::Index>(k));
  const auto n_samples = static_cast<std::ptrdiff_t>(s.n);

#pragma omp parallel for schedule(static) if (n_samples > 1)
  for (std::ptrdiff_t n = 0; n < n_samples; ++n) {
    std::vector<T> cols(k * hw);
    im2col(input.sample(static_cast<std::size_t>(n)).data(), s.c, s.h, s.w, cols.data());
    const Eigen::Map<const RowMat<T>> cm(cols.data(), static_cast<Eigen::Index>(k),
                                         static_cast<Eigen::Index>(hw));
    Eigen::Map<RowMat<T>> y(out.sample(static_cast<std::size_t>(n)).data(),
                            static_cast<Eigen::Index>(out_ch), static_cast<Eigen::Index>(hw));
    y.noalias() = wm * cm;
    for (std::size_t o = 0; o < out_ch; ++o) {
      y.row(static_cast<Eigen::Index>(o)).array() += bias[o];
    }
  }
  return out;
}

template <typename T>
Array4<T> conv2d_backward(const Array4<T>& input, const Array4<T>& weight,
                          const Array4<T>& grad_out, Array4<T>& grad_weight,
                          Array4<T>& grad_bias) {
  const Shape4 s = input.shape();
  check_conv_shapes(s, weight.shape(), grad_bias.shape());
  require_same_shape(weight.shape(), grad_weight.shape(), "conv2d_backward weight grad");
  const std::size_t out_ch = weight.shape().n;
  require_same_shape(grad_out.shape(), Shape4{s.n, out_ch, s.h, s.w}, "conv2d_backward");
  const std::size_t k = s.c * kTaps;
  const std::size_t hw = s.plane();
  const auto ko = static_cast<Eigen::Index>(out_ch);
  const auto kk = static_cast<Eigen::Index>(k);
  const auto khw = static_cast<Eigen::Index>(hw);

  Array4<T> grad_in(s);
  const Eigen::Map<const RowMat<T>> wm(weight.data(), ko, kk);
  // Per-sample weight gradients are reduced in sample order so the result
  // does not depend on the thread count.
  std::vector<RowMat<T>> partial(s.n, RowMat<T>::Zero(ko, kk));
  const auto n_samples = static_cast<std::ptrdiff_t>(s.n);

#pragma omp parallel for schedule(static) if (n_samples > 1)
  for (std::ptrdiff_t n = 0; n < n_samples; ++n) {
    const auto sn = static_cast<std::size_t>(n);
    std::vector<T> cols(k * hw);
    im2col(input.sample(sn).data(), s.c, s.h, s.w, cols.data());
    const Eigen::Map<const RowMat<T>> cm(cols.data(), kk, khw);
    const Eigen::Map<const RowMat<T>> dy(grad_out.sample(sn).data(), ko, khw);
    partial[sn].noalias() = dy * cm.transpose();
    Eigen::Map<RowMat<T>> dcols(cols.data(), kk, khw);
    dcols.noalias() = wm.transpose() * dy;
    col2im_add(cols.data(), s.c, s.h, s.w, grad_in.sample(sn).data());
  }

  Eigen::Map<RowMat<T>> gw(grad_weight.data(), ko, kk);
  for (const auto& p : partial) gw += p;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t o = 0; o < out_ch; ++o) {
      T acc{0};
      for (T v : grad_out.plane(n, o)) acc += v;
      grad_bias[o] += acc;
    }
  }
  return grad_in;
}

ActivationKind activation_kind_from_string(std::string_view name) {
  if (name == "relu") return ActivationKind::relu;
  if (name == "sigmoid") return ActivationKind::sigmoid;
  throw ConfigError("unknown activation kind '" + std::string(name) + "'");
}

std::string_view to_string(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::relu:
      return "relu";
    case ActivationKind::sigmoid:
      return "sigmoid";
  }
  throw ConfigError("unknown activation kind");
}

template <typename T>
Array4<T> activation(const Array4<T>& input, ActivationKind kind) {
  Array4<T> out(input.shape());
  switch (kind) {
    case ActivationKind::relu:
      for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T{0} ? input[i] : T{0};
      return out;
    case ActivationKind::sigmoid:
      for (std::size_t i = 0; i < input.size(); ++i) {
        out[i] = T{1} / (T{1} + std::exp(-input[i]));
      }
      return out;
  }
  throw ConfigError("unknown activation kind");
}

template <typename T>
Array4<T> activation_backward(const Array4<T>& output, const Array4<T>& grad_out,
                              ActivationKind kind) {
  require_same_shape(output.shape(), grad_out.shape(), "activation_backward");
  Array4<T> grad(output.shape());
  switch (kind) {
    case ActivationKind::relu:
      for (std::size_t i = 0; i < output.size(); ++i) {
        grad[i] = output[i] > T{0} ? grad_out[i] : T{0};
      }
      return grad;
    case ActivationKind::sigmoid:
      for (std::size_t i = 0; i < output.size(); ++i) {
        grad[i] = grad_out[i] * output[i] * (T{1} - output[i]);
      }
      return grad;
  }
  throw ConfigError("unknown activation kind");
}

template <typename T>
Array4<T> global_avg_pool(const Array4<T>& input) {
  const Shape4 s = input.shape();
  if (s.h == 0 || s.w == 0) {
    throw ShapeError("global_avg_pool: empty spatial extent " + s.str(),
                     s.h == 0 ? "height" : "width");
  }
  Array4<T> out({s.n, s.c, 1, 1});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const auto plane = input.plane(n, c);
      // A constant plane must pool to exactly that constant.
      const T first = plane[0];
      bool constant = true;
      double acc = 0.0;
      for (T v : plane) {
        acc += static_cast<double>(v);
        constant = constant && v == first;
      }
      out(n, c, 0, 0) = constant ? first : static_cast<T>(acc / static_cast<double>(plane.size()));
    }
  }
  return out;
}

template <typename T>
Array4<T> global_avg_pool_backward(const Shape4& input_shape, const Array4<T>& grad_out) {
  require_same_shape(grad_out.shape(), Shape4{input_shape.n, input_shape.c, 1, 1},
                     "global_avg_pool_backward");
  Array4<T> grad(input_shape);
  const T inv = T{1} / static_cast<T>(input_shape.plane());
  for (std::size_t n = 0; n < input_shape.n; ++n) {
    for (std::size_t c = 0; c < input_shape.c; ++c) {
      const T g = grad_out(n, c, 0, 0) * inv;
      for (T& v : grad.plane(n, c)) v = g;
    }
  }
  return grad;
}

namespace {

void check_dense_shapes(const Shape4& in, const Shape4& weight, const Shape4& bias) {
  if (in.h != 1 || in.w != 1) {
    throw ShapeError("dense: input must be (N, features, 1, 1), got " + in.str(), "height");
  }
  if (weight.c != in.c) {
    throw ShapeError("dense: weight has " + std::to_string(weight.c) +
                         " columns but input has " + std::to_string(in.c) + " features",
                     "features");
  }
  if (bias.size() != weight.n) {
    throw ShapeError("dense: bias length " + std::to_string(bias.size()) +
                         " does not match " + std::to_string(weight.n) + " outputs",
                     "bias");
  }
}

}  // namespace

template <typename T>
Array4<T> dense(const Array4<T>& input, const Array4<T>& weight, const Array4<T>& bias) {
  check_dense_shapes(input.shape(), weight.shape(), bias.shape());
  const std::size_t n_out = weight.shape().n;
  const std::size_t n_in = weight.shape().c;
  Array4<T> out({input.shape().n, n_out, 1, 1});
  for (std::size_t n = 0; n < input.shape().n; ++n) {
    for (std::size_t o = 0; o < n_out; ++o) {
      T acc = bias[o];
      for (std::size_t i = 0; i < n_in; ++i) acc += weight[o * n_in + i] * input[n * n_in + i];
      out[n * n_out + o] = acc;
    }
  }
  return out;
}

template <typename T>
Array4<T> dense_backward(const Array4<T>& input, const Array4<T>& weight,
                         const Array4<T>& grad_out, Array4<T>& grad_weight,
                         Array4<T>& grad_bias) {
  check_dense_shapes(input.shape(), weight.shape(), grad_bias.shape());
  const std::size_t n_out = weight.shape().n;
  const std::size_t n_in = weight.shape().c;
  require_same_shape(grad_out.shape(), Shape4{input.shape().n, n_out, 1, 1}, "dense_backward");
  Array4<T> grad_in(input.shape());
  for (std::size_t n = 0; n < input.shape().n; ++n) {
    for (std::size_t o = 0; o < n_out; ++o) {
      const T g = grad_out[n * n_out + o];
      grad_bias[o] += g;
      for (std::size_t i = 0; i < n_in; ++i) {
        grad_weight[o * n_in + i] += g * input[n * n_in + i];
        grad_in[n * n_in + i] += g * weight[o * n_in + i];
      }
    }
  }
  return grad_in;
}

template <typename T>
Array4<T> scale_channels(const Array4<T>& input, const Array4<T>& scales) {
  const Shape4 s = input.shape();
  require_same_shape(scales.shape(), Shape4{s.n, s.c, 1, 1}, "scale_channels");
  Array4<T> out(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const T k = scales(n, c, 0, 0);
      const auto src = input.plane(n, c);
      auto dst = out.plane(n, c);
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] * k;
    }
  }
  return out;
}

#define LRPCA_INSTANTIATE_OPS(T)                                                            \
  template Array4<T> conv2d(const Array4<T>&, const Array4<T>&, const Array4<T>&);         \
  template Array4<T> conv2d_backward(const Array4<T>&, const Array4<T>&, const Array4<T>&, \
                                     Array4<T>&, Array4<T>&);                              \
  template Array4<T> activation(const Array4<T>&, ActivationKind);                         \
  template Array4<T> activation_backward(const Array4<T>&, const Array4<T>&,               \
                                         ActivationKind);                                  \
  template Array4<T> global_avg_pool(const Array4<T>&);                                    \
  template Array4<T> global_avg_pool_backward(const Shape4&, const Array4<T>&);            \
  template Array4<T> dense(const Array4<T>&, const Array4<T>&, const Array4<T>&);          \
  template Array4<T> dense_backward(const Array4<T>&, const Array4<T>&, const Array4<T>&,  \
                                    Array4<T>&, Array4<T>&);                               \
  template Array4<T> scale_channels(const Array4<T>&, const Array4<T>&);

LRPCA_INSTANTIATE_OPS(float)
LRPCA_INSTANTIATE_OPS(double)

}  // namespace lrpca::nn
