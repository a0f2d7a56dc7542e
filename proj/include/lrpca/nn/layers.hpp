#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "lrpca/nn/array4.hpp"
#include "lrpca/nn/ops.hpp"
#include "lrpca/nn/parameter.hpp"
#include "lrpca/nn/rng.hpp"

namespace lrpca::nn {

enum class Mode { train, eval };

/// A differentiable layer.
///
/// `forward` records whatever `backward` needs and, in train mode, may update
/// running statistics. `infer` is the eval-mode path: const, records nothing,
/// and is safe to call concurrently on a shared layer. `backward` accumulates
/// parameter gradients and returns the gradient w.r.t. the last forward input.
template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual Array4<T> forward(const Array4<T>& input, Mode mode) = 0;
  virtual Array4<T> infer(const Array4<T>& input) const = 0;
  virtual Array4<T> backward(const Array4<T>& grad_out) = 0;
  virtual ParameterList<T> parameters() { return {}; }
  virtual std::string kind() const = 0;
};

template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(std::size_t in_channels, std::size_t out_channels);

  Array4<T> forward(const Array4<T>& input, Mode mode) override;
  Array4<T> infer(const Array4<T>& input) const override;
  Array4<T> backward(const Array4<T>& grad_out) override;
  ParameterList<T> parameters() override { return {&weight_, &bias_}; }
  std::string kind() const override { return "conv2d"; }

  /// Kaiming-normal weights (fan-in = in * 9), zero bias.
  void init_kaiming(Rng& rng);
  void init_zero();

  Parameter<T>& weight() noexcept { return weight_; }
  Parameter<T>& bias() noexcept { return bias_; }
  const Parameter<T>& weight() const noexcept { return weight_; }
  const Parameter<T>& bias() const noexcept { return bias_; }

 private:
  Parameter<T> weight_;
  Parameter<T> bias_;
  Array4<T> input_;
};

/// Per-channel batch normalization over (batch, height, width).
template <typename T>
class BatchNorm2d final : public Layer<T> {
 public:
  static constexpr double kDefaultMomentum = 0.1;
  static constexpr double kDefaultEps = 1e-5;

  explicit BatchNorm2d(std::size_t channels, double momentum = kDefaultMomentum,
                       double eps = kDefaultEps);

  Array4<T> forward(const Array4<T>& input, Mode mode) override;
  Array4<T> infer(const Array4<T>& input) const override;
  Array4<T> backward(const Array4<T>& grad_out) override;
  ParameterList<T> parameters() override {
    return {&gamma_, &beta_, &running_mean_, &running_var_};
  }
  std::string kind() const override { return "batchnorm"; }

  Parameter<T>& gamma() noexcept { return gamma_; }
  Parameter<T>& beta() noexcept { return beta_; }
  Parameter<T>& running_mean() noexcept { return running_mean_; }
  Parameter<T>& running_var() noexcept { return running_var_; }
  double momentum() const noexcept { return momentum_; }
  double eps() const noexcept { return eps_; }

 private:
  void check_channels(const Shape4& s) const;

  Parameter<T> gamma_;
  Parameter<T> beta_;
  Parameter<T> running_mean_;  // non-trainable
  Parameter<T> running_var_;   // non-trainable
  double momentum_;
  double eps_;

  Mode last_mode_ = Mode::eval;
  Array4<T> normalized_;
  std::vector<T> inv_std_;
};

template <typename T>
class Activation final : public Layer<T> {
 public:
  explicit Activation(ActivationKind kind) : kind_(kind) {}

  Array4<T> forward(const Array4<T>& input, Mode mode) override;
  Array4<T> infer(const Array4<T>& input) const override { return activation(input, kind_); }
  Array4<T> backward(const Array4<T>& grad_out) override;
  std::string kind() const override { return std::string(to_string(kind_)); }

 private:
  ActivationKind kind_;
  Array4<T> output_;
};

template <typename T>
class GlobalAvgPool final : public Layer<T> {
 public:
  Array4<T> forward(const Array4<T>& input, Mode mode) override;
  Array4<T> infer(const Array4<T>& input) const override { return global_avg_pool(input); }
  Array4<T> backward(const Array4<T>& grad_out) override;
  std::string kind() const override { return "global_avg_pool"; }

 private:
  Shape4 input_shape_{};
};

/// Fully connected layer over (N, in, 1, 1) feature vectors.
template <typename T>
class Dense final : public Layer<T> {
 public:
  Dense(std::size_t in_features, std::size_t out_features);

  Array4<T> forward(const Array4<T>& input, Mode mode) override;
  Array4<T> infer(const Array4<T>& input) const override;
  Array4<T> backward(const Array4<T>& grad_out) override;
  ParameterList<T> parameters() override { return {&weight_, &bias_}; }
  std::string kind() const override { return "dense"; }

  void init_kaiming(Rng& rng);

  Parameter<T>& weight() noexcept { return weight_; }
  Parameter<T>& bias() noexcept { return bias_; }
  const Parameter<T>& weight() const noexcept { return weight_; }
  const Parameter<T>& bias() const noexcept { return bias_; }

 private:
  Parameter<T> weight_;
  Parameter<T> bias_;
  Array4<T> input_;
};

/// Ordered chain of named layers.
template <typename T>
class Sequential final : public Layer<T> {
 public:
  Sequential() = default;
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  /// Appends `layer`, prefixing its parameter names with `name`.
  template <typename L>
  L& add(std::string name, std::unique_ptr<L> layer) {
    L& ref = *layer;
    for (auto* p : ref.parameters()) p->name = name + "." + p->name;
    layers_.emplace_back(std::move(name), std::move(layer));
    return ref;
  }

  Array4<T> forward(const Array4<T>& input, Mode mode) override;
  Array4<T> infer(const Array4<T>& input) const override;
  Array4<T> backward(const Array4<T>& grad_out) override;
  ParameterList<T> parameters() override;
  std::string kind() const override { return "sequential"; }

  std::size_t size() const noexcept { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_.at(i).second; }
  const Layer<T>& layer(std::size_t i) const { return *layers_.at(i).second; }
  const std::string& name(std::size_t i) const { return layers_.at(i).first; }

 private:
  std::vector<std::pair<std::string, std::unique_ptr<Layer<T>>>> layers_;
};

}  // namespace lrpca::nn
