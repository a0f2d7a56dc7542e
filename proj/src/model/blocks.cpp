#include "lrpca/model/blocks.hpp"

#include <memory>

namespace lrpca::model {

using nn::ActivationKind;
using nn::Shape4;

template <typename T>
SEBlock<T>::SEBlock(std::size_t channels, std::size_t ratio)
    : channels_(channels),
      fc1_(channels, ratio == 0 ? 0 : channels / ratio),
      fc2_(ratio == 0 ? 0 : channels / ratio, channels) {
  if (ratio == 0 || channels % ratio != 0) {
    throw ConfigError("se block: ratio " + std::to_string(ratio) + " does not divide " +
                      std::to_string(channels) + " channels");
  }
  auto a = fc1_.parameters();
  nn::prefix_names(a, "fc1");
  auto b = fc2_.parameters();
  nn::prefix_names(b, "fc2");
}

template <typename T>
void SEBlock<T>::init_kaiming(nn::Rng& rng) {
  fc1_.init_kaiming(rng);
  fc2_.init_kaiming(rng);
}

template <typename T>
nn::ParameterList<T> SEBlock<T>::parameters() {
  return {&fc1_.weight(), &fc1_.bias(), &fc2_.weight(), &fc2_.bias()};
}

template <typename T>
void SEBlock<T>::check_channels(const Shape4& s) const {
  if (s.c != channels_) {
    throw ShapeError("se block: input has " + std::to_string(s.c) + " channels, block expects " +
                         std::to_string(channels_),
                     "channels");
  }
}

template <typename T>
Array4<T> SEBlock<T>::gates(const Array4<T>& input) const {
  check_channels(input.shape());
  const auto z = nn::global_avg_pool(input);
  return sigmoid_.infer(fc2_.infer(relu_.infer(fc1_.infer(z))));
}

template <typename T>
Array4<T> SEBlock<T>::infer(const Array4<T>& input) const {
  return nn::scale_channels(input, gates(input));
}

template <typename T>
Array4<T> SEBlock<T>::forward(const Array4<T>& input, Mode mode) {
  check_channels(input.shape());
  input_ = input;
  const auto z = nn::global_avg_pool(input);
  gates_ = sigmoid_.forward(fc2_.forward(relu_.forward(fc1_.forward(z, mode), mode), mode), mode);
  return nn::scale_channels(input, gates_);
}

template <typename T>
Array4<T> SEBlock<T>::backward(const Array4<T>& grad_out) {
  const Shape4 s = input_.shape();
  nn::require_same_shape(grad_out.shape(), s, "se block backward");
  Array4<T> grad_in = nn::scale_channels(grad_out, gates_);
  Array4<T> grad_gates(gates_.shape());
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const auto dy = grad_out.plane(n, c);
      const auto x = input_.plane(n, c);
      double acc = 0.0;
      for (std::size_t i = 0; i < dy.size(); ++i) acc += static_cast<double>(dy[i]) * x[i];
      grad_gates(n, c, 0, 0) = static_cast<T>(acc);
    }
  }
  const auto grad_z =
      fc1_.backward(relu_.backward(fc2_.backward(sigmoid_.backward(grad_gates))));
  grad_in += nn::global_avg_pool_backward(s, grad_z);
  return grad_in;
}

template <typename T>
nn::Sequential<T> make_branch_group(const ModelConfig& config, bool batchnorm, bool se,
                                    nn::Rng& rng) {
  config.validate();
  nn::Sequential<T> g;
  std::size_t index = 0;
  auto hidden = [&](std::size_t in, std::size_t out) {
    ++index;
    const std::string id = std::to_string(index);
    g.add("conv" + id, std::make_unique<nn::Conv2d<T>>(in, out)).init_kaiming(rng);
    if (batchnorm) g.add("bn" + id, std::make_unique<nn::BatchNorm2d<T>>(out));
    g.add("relu" + id, std::make_unique<nn::Activation<T>>(ActivationKind::relu));
  };
  hidden(1, config.bottleneck_channels);
  hidden(config.bottleneck_channels, config.channels);
  for (std::size_t i = 0; i < config.fill_blocks; ++i) hidden(config.channels, config.channels);
  if (se) {
    g.add("se", std::make_unique<SEBlock<T>>(config.channels, config.se_ratio)).init_kaiming(rng);
  }
  g.add("out", std::make_unique<nn::Conv2d<T>>(config.channels, 1)).init_zero();
  return g;
}

template <typename T>
nn::Sequential<T> make_reconstruction_group(const ModelConfig& config, bool se, nn::Rng& rng) {
  config.validate();
  nn::Sequential<T> g;
  const std::size_t c = config.channels;
  g.add("conv1", std::make_unique<nn::Conv2d<T>>(1, c)).init_kaiming(rng);
  g.add("relu1", std::make_unique<nn::Activation<T>>(ActivationKind::relu));
  for (std::size_t i = 0; i < config.reconstruction_depth; ++i) {
    const std::string id = std::to_string(i + 2);
    g.add("conv" + id, std::make_unique<nn::Conv2d<T>>(c, c)).init_kaiming(rng);
    g.add("relu" + id, std::make_unique<nn::Activation<T>>(ActivationKind::relu));
  }
  if (se) g.add("se", std::make_unique<SEBlock<T>>(c, config.se_ratio)).init_kaiming(rng);
  g.add("out", std::make_unique<nn::Conv2d<T>>(c, 1)).init_kaiming(rng);
  return g;
}

template class SEBlock<float>;
template class SEBlock<double>;
template nn::Sequential<float> make_branch_group<float>(const ModelConfig&, bool, bool, nn::Rng&);
template nn::Sequential<double> make_branch_group<double>(const ModelConfig&, bool, bool, nn::Rng&);
template nn::Sequential<float> make_reconstruction_group<float>(const ModelConfig&, bool, nn::Rng&);
template nn::Sequential<double> make_reconstruction_group<double>(const ModelConfig&, bool,
                                                                   nn::Rng&);

}  // namespace lrpca::model
