#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "blastoseg/errors.hpp"

namespace blastoseg::numerics {

struct Shape4 {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t size() const noexcept {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * w; }
  std::size_t sample_size() const noexcept { return static_cast<std::size_t>(c) * h * w; }
  bool operator==(const Shape4&) const = default;
  std::string str() const;
};

/// Dense (n, c, h, w) array stored row-major.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape4 shape, T fill = T(0));
  Tensor(Shape4 shape, std::vector<T> data);

  const Shape4& shape() const noexcept { return shape_; }
  int n() const noexcept { return shape_.n; }
  int c() const noexcept { return shape_.c; }
  int h() const noexcept { return shape_.h; }
  int w() const noexcept { return shape_.w; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* raw() noexcept { return data_.data(); }
  const T* raw() const noexcept { return data_.data(); }

  T* sample(int n) noexcept { return data_.data() + n * shape_.sample_size(); }
  const T* sample(int n) const noexcept { return data_.data() + n * shape_.sample_size(); }
  T* channel(int n, int c) noexcept { return sample(n) + c * shape_.plane(); }
  const T* channel(int n, int c) const noexcept { return sample(n) + c * shape_.plane(); }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  T operator[](std::size_t i) const noexcept { return data_[i]; }

  T& at(int n, int c, int y, int x) noexcept {
    return data_[((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }
  T at(int n, int c, int y, int x) const noexcept {
    return data_[((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }

  void fill(T value);
  /// True when every element is finite.
  bool all_finite() const noexcept;

  bool operator==(const Tensor&) const = default;

 private:
  Shape4 shape_{};
  std::vector<T> data_;
};

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& src) {
  std::vector<To> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = static_cast<To>(src[i]);
  return Tensor<To>(src.shape(), std::move(out));
}

/// Throws DimensionError naming the first axis on which the shapes differ.
void require_same_shape(const Shape4& a, const Shape4& b, const std::string& context);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace blastoseg::numerics
