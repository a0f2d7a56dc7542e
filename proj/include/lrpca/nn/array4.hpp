#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lrpca/errors.hpp"

namespace lrpca::nn {

/// (batch, channels, height, width) extents of a dense NCHW array.
struct Shape4 {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  constexpr std::size_t size() const noexcept { return n * c * h * w; }
  constexpr std::size_t plane() const noexcept { return h * w; }
  constexpr std::size_t sample() const noexcept { return c * h * w; }

  /// Shape used for flat parameter vectors (biases, gains, scalars).
  static constexpr Shape4 vec(std::size_t len) noexcept { return {len, 1, 1, 1}; }

  friend constexpr bool operator==(const Shape4&, const Shape4&) = default;

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) +
           "," + std::to_string(w) + ")";
  }
};

/// Throws ShapeError naming the first axis on which `a` and `b` differ.
inline void require_same_shape(const Shape4& a, const Shape4& b, std::string_view what) {
  const char* axis = nullptr;
  if (a.n != b.n) {
    axis = "batch";
  } else if (a.c != b.c) {
    axis = "channels";
  } else if (a.h != b.h) {
    axis = "height";
  } else if (a.w != b.w) {
    axis = "width";
  }
  if (axis != nullptr) {
    throw ShapeError(std::string(what) + ": shape mismatch on " + axis + " axis, " +
                         a.str() + " vs " + b.str(),
                     axis);
  }
}

/// Dense NCHW array with value semantics.
template <typename T>
class Array4 {
 public:
  using value_type = T;

  Array4() = default;
  explicit Array4(Shape4 shape, T fill = T{0}) : shape_(shape), data_(shape.size(), fill) {}
  Array4(Shape4 shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size()) {
      throw ShapeError("Array4: " + std::to_string(data_.size()) +
                           " values do not fill shape " + shape_.str(),
                       "size");
    }
  }

  const Shape4& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() & noexcept { return data_; }
  std::span<const T> values() const& noexcept { return data_; }
  // a span into a temporary would dangle
  std::span<const T> values() const&& = delete;
  const std::vector<T>& vector() const noexcept { return data_; }

  std::size_t offset(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const noexcept {
    return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  T& operator()(std::size_t n, std::size_t c, std::size_t y, std::size_t x) noexcept {
    return data_[offset(n, c, y, x)];
  }
  const T& operator()(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const noexcept {
    return data_[offset(n, c, y, x)];
  }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<T> plane(std::size_t n, std::size_t c) noexcept {
    return std::span<T>(data_).subspan(offset(n, c, 0, 0), shape_.plane());
  }
  std::span<const T> plane(std::size_t n, std::size_t c) const noexcept {
    return std::span<const T>(data_).subspan(offset(n, c, 0, 0), shape_.plane());
  }
  std::span<T> sample(std::size_t n) noexcept {
    return std::span<T>(data_).subspan(n * shape_.sample(), shape_.sample());
  }
  std::span<const T> sample(std::size_t n) const noexcept {
    return std::span<const T>(data_).subspan(n * shape_.sample(), shape_.sample());
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  Array4& operator+=(const Array4& o) {
    require_same_shape(shape_, o.shape_, "Array4 +=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Array4& operator-=(const Array4& o) {
    require_same_shape(shape_, o.shape_, "Array4 -=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Array4& operator*=(T s) {
    for (auto& v : data_) v *= s;
    return *this;
  }
  /// this += s * o
  Array4& add_scaled(const Array4& o, T s) {
    require_same_shape(shape_, o.shape_, "Array4 add_scaled");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * o.data_[i];
    return *this;
  }

  template <typename U>
  Array4<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(),
                   [](T v) { return static_cast<U>(v); });
    return Array4<U>(shape_, std::move(out));
  }

  friend bool operator==(const Array4& a, const Array4& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape4 shape_{};
  std::vector<T> data_;
};

template <typename T>
Array4<T> operator+(Array4<T> a, const Array4<T>& b) {
  a += b;
  return a;
}
template <typename T>
Array4<T> operator-(Array4<T> a, const Array4<T>& b) {
  a -= b;
  return a;
}
template <typename T>
Array4<T> operator*(Array4<T> a, T s) {
  a *= s;
  return a;
}
template <typename T>
Array4<T> operator*(T s, Array4<T> a) {
  a *= s;
  return a;
}

template <typename T>
double sum(const Array4<T>& a) {
  double s = 0.0;
  for (T v : a.values()) s += static_cast<double>(v);
  return s;
}

template <typename T>
double dot(const Array4<T>& a, const Array4<T>& b) {
  require_same_shape(a.shape(), b.shape(), "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

template <typename T>
double frobenius_norm(const Array4<T>& a) {
  return std::sqrt(dot(a, a));
}

template <typename T>
Array4<T> hadamard(Array4<T> a, const Array4<T>& b) {
  require_same_shape(a.shape(), b.shape(), "hadamard");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] *= b[i];
  return a;
}

/// Single-channel image batch (N x 1 x H x W); carrier of D, B, T, N.
template <typename T>
using ImagePlane = Array4<T>;

}  // namespace lrpca::nn
