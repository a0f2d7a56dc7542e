#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lrpca/nn/array4.hpp"
#include "lrpca/nn/rng.hpp"

namespace lrpca::nn {

template <typename T>
struct Parameter {
  Parameter() = default;
  Parameter(std::string param_name, Array4<T> initial, bool is_trainable = true)
      : name(std::move(param_name)),
        value(std::move(initial)),
        grad(value.shape()),
        trainable(is_trainable) {}

  void zero_grad() { grad.fill(T{0}); }
  std::size_t size() const noexcept { return value.size(); }

  std::string name;
  Array4<T> value;
  Array4<T> grad;
  bool trainable = true;
};

/// Non-owning view over the parameters of a module tree.
template <typename T>
using ParameterList = std::vector<Parameter<T>*>;

/// Prefixes every name in `params` with `prefix + "."`.
template <typename T>
void prefix_names(ParameterList<T>& params, const std::string& prefix) {
  for (auto* p : params) p->name = prefix + "." + p->name;
}

template <typename T>
void zero_grads(const ParameterList<T>& params) {
  for (auto* p : params) p->zero_grad();
}

/// Number of trainable scalars.
template <typename T>
std::size_t trainable_count(const ParameterList<T>& params) {
  std::size_t n = 0;
  for (const auto* p : params) {
    if (p->trainable) n += p->size();
  }
  return n;
}

/// Throws ConfigError if two parameters share a name.
template <typename T>
void require_unique_names(const ParameterList<T>& params);

/// Kaiming-normal fill, std = sqrt(2 / fan_in).
template <typename T>
void kaiming_normal(Array4<T>& weights, std::size_t fan_in, Rng& rng);

}  // namespace lrpca::nn
