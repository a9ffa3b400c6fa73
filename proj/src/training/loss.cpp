#include <algorithm>
#include <cmath>

#include "blastoseg/training.hpp"

namespace blastoseg::training {

template <typename T>
LossResult<T> bce_jaccard_loss(const Tensor<T>& pred, const Tensor<T>& target, double epsilon,
                               bool with_grad) {
  numerics::require_same_shape(pred.shape(), target.shape(), "bce_jaccard_loss");
  if (pred.empty()) throw ValidationError("loss of an empty batch");
  if (!(epsilon > 0.0)) throw ConfigurationError("loss epsilon must be positive");
  const int n = pred.n();
  const std::size_t per = pred.shape().sample_size();
  const double total = static_cast<double>(pred.size());
  const double lo = kProbabilityClamp, hi = 1.0 - kProbabilityClamp;

  LossResult<T> r;
  if (with_grad) r.grad = Tensor<T>(pred.shape());
  double bce = 0.0, jaccard_sum = 0.0;
  for (int s = 0; s < n; ++s) {
    const T* p = pred.sample(s);
    const T* g = target.sample(s);
    double inter = 0.0, sum_p = 0.0, sum_g = 0.0;
    for (std::size_t i = 0; i < per; ++i) {
      const double gi = static_cast<double>(g[i]);
      if (gi != 0.0 && gi != 1.0) throw ValidationError("loss targets must be 0 or 1");
      const double pi = std::clamp(static_cast<double>(p[i]), lo, hi);
      bce -= gi * std::log(pi) + (1.0 - gi) * std::log(1.0 - pi);
      inter += pi * gi;
      sum_p += pi;
      sum_g += gi;
    }
    const double num = inter + epsilon;
    const double den = sum_p + sum_g - inter + epsilon;
    jaccard_sum += num / den;
    if (!with_grad) continue;
    T* out = r.grad.sample(s);
    const double den2 = den * den;
    for (std::size_t i = 0; i < per; ++i) {
      const double gi = static_cast<double>(g[i]);
      const double pi = std::clamp(static_cast<double>(p[i]), lo, hi);
      const double d_bce = -(gi / pi - (1.0 - gi) / (1.0 - pi)) / total;
      const double d_jac = (gi * den - num * (1.0 - gi)) / den2;
      out[i] = static_cast<T>(d_bce - d_jac / n);
    }
  }
  r.bce = bce / total;
  r.soft_jaccard = jaccard_sum / n;
  r.loss = r.bce + (1.0 - r.soft_jaccard);
  return r;
}

template LossResult<float> bce_jaccard_loss(const Tensor<float>&, const Tensor<float>&, double, bool);
template LossResult<double> bce_jaccard_loss(const Tensor<double>&, const Tensor<double>&, double, bool);

}  // namespace blastoseg::training
