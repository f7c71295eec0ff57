#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pavepci/errors.hpp"

namespace pavepci {

// Extent of a rank-4 feature map in NCHW order.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t count() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

// Dense row-major NCHW tensor that owns its storage. Every activation,
// parameter, and gradient in the library is one of these.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(shape), data_(shape.count(), fill) {
    if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
      throw InputError("negative tensor extent " + shape.str());
    }
  }
  Tensor(int n, int c, int h, int w, T fill = T(0))
      : Tensor(Shape{n, c, h, w}, fill) {}

  const Shape& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(int b, int ch, int y, int x) const {
    return ((static_cast<std::size_t>(b) * shape_.c + ch) * shape_.h + y) *
               shape_.w +
           x;
  }
  T& at(int b, int ch, int y, int x) { return data_[index(b, ch, y, x)]; }
  const T& at(int b, int ch, int y, int x) const {
    return data_[index(b, ch, y, x)];
  }

  // Pointer to the first element of image b.
  T* image(int b) { return data_.data() + static_cast<std::size_t>(b) * shape_.c * shape_.plane(); }
  const T* image(int b) const {
    return data_.data() + static_cast<std::size_t>(b) * shape_.c * shape_.plane();
  }
  // Pointer to the first element of plane (b, ch).
  T* plane(int b, int ch) { return data_.data() + index(b, ch, 0, 0); }
  const T* plane(int b, int ch) const { return data_.data() + index(b, ch, 0, 0); }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  // Same storage reinterpreted under a new shape with identical element count.
  Tensor reshaped(Shape shape) const {
    if (shape.count() != data_.size()) {
      throw InputError("cannot reshape " + shape_.str() + " to " + shape.str());
    }
    Tensor out;
    out.shape_ = shape;
    out.data_ = data_;
    return out;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    std::transform(data_.begin(), data_.end(), out.data(),
                   [](T v) { return static_cast<U>(v); });
    return out;
  }

  Tensor& operator+=(const Tensor& other) {
    require_same_shape(other, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }

  void require_same_shape(const Tensor& other, const char* what) const {
    if (!(shape_ == other.shape_)) {
      throw InputError(std::string("shape mismatch in ") + what + ": " +
                       shape_.str() + " vs " + other.shape_.str());
    }
  }

 private:
  Shape shape_{};
  std::vector<T> data_;
};

// Concatenate along the channel axis. All inputs share n, h, w.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
    throw InputError("concat_channels: incompatible " + a.shape().str() +
                     " and " + b.shape().str());
  }
  Tensor<T> out(a.n(), a.c() + b.c(), a.h(), a.w());
  const std::size_t as = static_cast<std::size_t>(a.c()) * a.shape().plane();
  const std::size_t bs = static_cast<std::size_t>(b.c()) * b.shape().plane();
  for (int i = 0; i < a.n(); ++i) {
    std::copy_n(a.image(i), as, out.image(i));
    std::copy_n(b.image(i), bs, out.image(i) + as);
  }
  return out;
}

// Inverse of concat_channels: first `channels` channels and the rest.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& t, int channels) {
  if (channels < 0 || channels > t.c()) {
    throw InputError("split_channels: bad split point");
  }
  Tensor<T> a(t.n(), channels, t.h(), t.w());
  Tensor<T> b(t.n(), t.c() - channels, t.h(), t.w());
  const std::size_t as = static_cast<std::size_t>(a.c()) * t.shape().plane();
  const std::size_t bs = static_cast<std::size_t>(b.c()) * t.shape().plane();
  for (int i = 0; i < t.n(); ++i) {
    std::copy_n(t.image(i), as, a.image(i));
    std::copy_n(t.image(i) + as, bs, b.image(i));
  }
  return {std::move(a), std::move(b)};
}

}  // namespace pavepci
