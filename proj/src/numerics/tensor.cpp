#include "blastoseg/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace blastoseg::numerics {

std::string Shape4::str() const {
  return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) + ", " +
         std::to_string(w) + ")";
}

template <typename T>
Tensor<T>::Tensor(Shape4 shape, T fill) : shape_(shape) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw DimensionError("shape", "negative extent in " + shape.str());
  }
  data_.assign(shape.size(), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape4 shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape.size()) {
    throw DimensionError("data", "length " + std::to_string(data_.size()) +
                                     " does not match shape " + shape.str());
  }
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
bool Tensor<T>::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

void require_same_shape(const Shape4& a, const Shape4& b, const std::string& context) {
  auto check = [&](const char* axis, int x, int y) {
    if (x != y) {
      throw DimensionError(axis, context + ": " + a.str() + " vs " + b.str());
    }
  };
  check("n", a.n, b.n);
  check("c", a.c, b.c);
  check("h", a.h, b.h);
  check("w", a.w, b.w);
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace blastoseg::numerics
