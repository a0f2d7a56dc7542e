#pragma once

#include <string_view>

#include "lrpca/nn/array4.hpp"

namespace lrpca::nn {

// Stateless tensor operations. Every backward rule *accumulates* into the
// parameter-gradient outputs and returns the gradient w.r.t. the input.

/// 3x3 convolution, padding 1, stride 1. `weight` is (out, in, 3, 3),
/// `bias` is Shape4::vec(out).
template <typename T>
Array4<T> conv2d(const Array4<T>& input, const Array4<T>& weight, const Array4<T>& bias);

template <typename T>
Array4<T> conv2d_backward(const Array4<T>& input, const Array4<T>& weight,
                          const Array4<T>& grad_out, Array4<T>& grad_weight,
                          Array4<T>& grad_bias);

enum class ActivationKind { relu, sigmoid };

/// Parses "relu" / "sigmoid"; anything else is a ConfigError.
ActivationKind activation_kind_from_string(std::string_view name);
std::string_view to_string(ActivationKind kind);

template <typename T>
Array4<T> activation(const Array4<T>& input, ActivationKind kind);

/// Backward expressed through the forward output (relu: y > 0, sigmoid: y(1-y)).
template <typename T>
Array4<T> activation_backward(const Array4<T>& output, const Array4<T>& grad_out,
                              ActivationKind kind);

/// Mean over each (batch, channel) plane; result is (N, C, 1, 1).
template <typename T>
Array4<T> global_avg_pool(const Array4<T>& input);

template <typename T>
Array4<T> global_avg_pool_backward(const Shape4& input_shape, const Array4<T>& grad_out);

/// Affine map over the channel axis of an (N, in, 1, 1) array.
/// `weight` is (out, in, 1, 1), `bias` is Shape4::vec(out).
template <typename T>
Array4<T> dense(const Array4<T>& input, const Array4<T>& weight, const Array4<T>& bias);

template <typename T>
Array4<T> dense_backward(const Array4<T>& input, const Array4<T>& weight,
                         const Array4<T>& grad_out, Array4<T>& grad_weight,
                         Array4<T>& grad_bias);

/// out[n,c,:,:] = input[n,c,:,:] * scales[n,c]; `scales` is (N, C, 1, 1).
template <typename T>
Array4<T> scale_channels(const Array4<T>& input, const Array4<T>& scales);

}  // namespace lrpca::nn
