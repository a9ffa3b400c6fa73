#include <algorithm>
#include <cmath>
#include <string>

#include "blastoseg/layers.hpp"
#include "blastoseg/random.hpp"

namespace blastoseg::numerics {

template <typename T>
PoolResult<T> maxpool2d(const Tensor<T>& input, int window, int stride) {
  if (window != 2 || stride != 2) {
    throw UnsupportedConfiguration("maxpool2d supports only a 2x2 window with stride 2");
  }
  if (input.h() % 2 != 0) throw DimensionError("h", "odd height " + std::to_string(input.h()));
  if (input.w() % 2 != 0) throw DimensionError("w", "odd width " + std::to_string(input.w()));
  const int oh = input.h() / 2, ow = input.w() / 2;
  PoolResult<T> r{Tensor<T>(Shape4{input.n(), input.c(), oh, ow}), {}};
  r.argmax.resize(r.output.size());
  std::size_t k = 0;
  for (int n = 0; n < input.n(); ++n) {
    for (int c = 0; c < input.c(); ++c) {
      const std::size_t base = input.channel(n, c) - input.raw();
      const T* plane = input.channel(n, c);
      for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x, ++k) {
          std::size_t best = static_cast<std::size_t>(2 * y) * input.w() + 2 * x;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const std::size_t idx = static_cast<std::size_t>(2 * y + dy) * input.w() + 2 * x + dx;
              if (plane[idx] > plane[best]) best = idx;
            }
          }
          r.output[k] = plane[best];
          r.argmax[k] = static_cast<std::int64_t>(base + best);
        }
      }
    }
  }
  return r;
}

template <typename T>
Tensor<T> maxpool2d_backward(const Tensor<T>& grad_output, std::span<const std::int64_t> argmax,
                             const Shape4& input_shape) {
  if (argmax.size() != grad_output.size()) {
    throw DimensionError("argmax", "index map does not match grad_output");
  }
  Tensor<T> g(input_shape);
  for (std::size_t k = 0; k < argmax.size(); ++k) g[static_cast<std::size_t>(argmax[k])] += grad_output[k];
  return g;
}

namespace {

template <typename T>
void check_affine(const Tensor<T>& input, std::span<const T> gamma, std::span<const T> beta) {
  if (static_cast<int>(gamma.size()) != input.c() || static_cast<int>(beta.size()) != input.c()) {
    throw DimensionError("c", "batchnorm affine parameters do not match channel count " +
                                  std::to_string(input.c()));
  }
}

}  // namespace

template <typename T>
Tensor<T> batchnorm(const Tensor<T>& input, std::span<const T> gamma, std::span<const T> beta,
                    Mode mode, BatchNormState<T>& state, const BatchNormSettings& settings,
                    BatchNormCache<T>* cache) {
  if (mode == Mode::infer) {
    Tensor<T> out = batchnorm_infer(input, gamma, beta, state, settings);
    if (cache != nullptr) {
      const int C = input.c();
      const std::size_t plane = input.shape().plane();
      cache->normalized = Tensor<T>(input.shape());
      cache->inv_std.assign(C, 0.0);
      cache->frozen = true;
      for (int c = 0; c < C; ++c) {
        const double inv = 1.0 / std::sqrt(static_cast<double>(state.running_var[c]) + settings.epsilon);
        cache->inv_std[c] = inv;
        for (int n = 0; n < input.n(); ++n) {
          const T* p = input.channel(n, c);
          T* xn = cache->normalized.channel(n, c);
          for (std::size_t k = 0; k < plane; ++k) xn[k] = static_cast<T>((p[k] - state.running_mean[c]) * inv);
        }
      }
    }
    return out;
  }
  check_affine(input, gamma, beta);
  if (static_cast<int>(state.running_mean.size()) != input.c()) {
    throw DimensionError("c", "batchnorm running statistics do not match channel count");
  }
  const int C = input.c();
  const std::size_t plane = input.shape().plane();
  const double count = static_cast<double>(input.n()) * static_cast<double>(plane);
  Tensor<T> out(input.shape());
  Tensor<T> normalized(input.shape());
  std::vector<double> inv_std(C);
  for (int c = 0; c < C; ++c) {
    double sum = 0.0;
    for (int n = 0; n < input.n(); ++n) {
      const T* p = input.channel(n, c);
      for (std::size_t k = 0; k < plane; ++k) sum += p[k];
    }
    const double mean = sum / count;
    double sq = 0.0;
    for (int n = 0; n < input.n(); ++n) {
      const T* p = input.channel(n, c);
      for (std::size_t k = 0; k < plane; ++k) {
        const double d = p[k] - mean;
        sq += d * d;
      }
    }
    const double var = sq / count;
    inv_std[c] = 1.0 / std::sqrt(var + settings.epsilon);
    for (int n = 0; n < input.n(); ++n) {
      const T* p = input.channel(n, c);
      T* xn = normalized.channel(n, c);
      T* y = out.channel(n, c);
      for (std::size_t k = 0; k < plane; ++k) {
        const double v = (p[k] - mean) * inv_std[c];
        xn[k] = static_cast<T>(v);
        y[k] = static_cast<T>(gamma[c] * v + beta[c]);
      }
    }
    if (mode == Mode::train) {
      T& rm = state.running_mean[c];
      T& rv = state.running_var[c];
      if (!state.initialized) {
        rm = static_cast<T>(mean);
        rv = static_cast<T>(var);
      } else {
        rm = static_cast<T>(settings.momentum * rm + (1.0 - settings.momentum) * mean);
        rv = static_cast<T>(settings.momentum * rv + (1.0 - settings.momentum) * var);
      }
    }
  }
  if (mode == Mode::train) state.initialized = true;
  if (cache != nullptr) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
    cache->frozen = false;
  }
  return out;
}

template <typename T>
Tensor<T> batchnorm_infer(const Tensor<T>& input, std::span<const T> gamma,
                          std::span<const T> beta, const BatchNormState<T>& state,
                          const BatchNormSettings& settings) {
  check_affine(input, gamma, beta);
  if (!state.initialized) {
    throw StateError("batchnorm running statistics are uninitialized; run a train-mode pass or load a checkpoint");
  }
  if (static_cast<int>(state.running_mean.size()) != input.c()) {
    throw DimensionError("c", "batchnorm running statistics do not match channel count");
  }
  Tensor<T> out(input.shape());
  const std::size_t plane = input.shape().plane();
  for (int c = 0; c < input.c(); ++c) {
    const double scale = gamma[c] / std::sqrt(static_cast<double>(state.running_var[c]) + settings.epsilon);
    const double shift = beta[c] - scale * state.running_mean[c];
    for (int n = 0; n < input.n(); ++n) {
      const T* p = input.channel(n, c);
      T* y = out.channel(n, c);
      for (std::size_t k = 0; k < plane; ++k) y[k] = static_cast<T>(scale * p[k] + shift);
    }
  }
  return out;
}

template <typename T>
BatchNormGradients<T> batchnorm_backward(const Tensor<T>& grad_output,
                                         const BatchNormCache<T>& cache,
                                         std::span<const T> gamma) {
  require_same_shape(grad_output.shape(), cache.normalized.shape(), "batchnorm_backward");
  const int C = grad_output.c();
  const std::size_t plane = grad_output.shape().plane();
  const double count = static_cast<double>(grad_output.n()) * static_cast<double>(plane);
  BatchNormGradients<T> g{Tensor<T>(grad_output.shape()), std::vector<T>(C), std::vector<T>(C)};
  for (int c = 0; c < C; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int n = 0; n < grad_output.n(); ++n) {
      const T* dy = grad_output.channel(n, c);
      const T* xh = cache.normalized.channel(n, c);
      for (std::size_t k = 0; k < plane; ++k) {
        sum_dy += dy[k];
        sum_dy_xhat += static_cast<double>(dy[k]) * xh[k];
      }
    }
    g.gamma[c] = static_cast<T>(sum_dy_xhat);
    g.beta[c] = static_cast<T>(sum_dy);
    if (cache.frozen) {
      const double scale = gamma[c] * cache.inv_std[c];
      for (int n = 0; n < grad_output.n(); ++n) {
        const T* dy = grad_output.channel(n, c);
        T* dx = g.input.channel(n, c);
        for (std::size_t k = 0; k < plane; ++k) dx[k] = static_cast<T>(scale * dy[k]);
      }
      continue;
    }
    const double k0 = gamma[c] * cache.inv_std[c] / count;
    for (int n = 0; n < grad_output.n(); ++n) {
      const T* dy = grad_output.channel(n, c);
      const T* xh = cache.normalized.channel(n, c);
      T* dx = g.input.channel(n, c);
      for (std::size_t k = 0; k < plane; ++k) {
        dx[k] = static_cast<T>(k0 * (count * dy[k] - sum_dy - xh[k] * sum_dy_xhat));
      }
    }
  }
  return g;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T(0) ? input[i] : T(0);
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_output, const Tensor<T>& input) {
  require_same_shape(grad_output.shape(), input.shape(), "relu_backward");
  Tensor<T> g(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) g[i] = input[i] > T(0) ? grad_output[i] : T(0);
  return g;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    const double x = input[i];
    // Split by sign so exp never overflows.
    out[i] = static_cast<T>(x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)));
  }
  return out;
}

template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& grad_output, const Tensor<T>& output) {
  require_same_shape(grad_output.shape(), output.shape(), "sigmoid_backward");
  Tensor<T> g(output.shape());
  for (std::size_t i = 0; i < output.size(); ++i) {
    g[i] = grad_output[i] * output[i] * (T(1) - output[i]);
  }
  return g;
}

template <typename T>
DropoutResult<T> dropout(const Tensor<T>& input, double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigurationError("dropout rate must lie in [0, 1)");
  DropoutResult<T> r{Tensor<T>(input.shape()), Tensor<T>(input.shape())};
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  const std::uint64_t stream = mix64(seed);
  for (std::size_t i = 0; i < input.size(); ++i) {
    const bool keep = unit_from_bits(mix64(stream + i)) >= rate;
    r.scale[i] = keep ? keep_scale : T(0);
    r.output[i] = input[i] * r.scale[i];
  }
  return r;
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& grad_output, const Tensor<T>& scale) {
  require_same_shape(grad_output.shape(), scale.shape(), "dropout_backward");
  Tensor<T> g(grad_output.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = grad_output[i] * scale[i];
  return g;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& first, const Tensor<T>& second) {
  if (first.n() != second.n()) throw DimensionError("n", "concat batch mismatch");
  if (first.h() != second.h()) throw DimensionError("h", "concat height mismatch " + first.shape().str() + " vs " + second.shape().str());
  if (first.w() != second.w()) throw DimensionError("w", "concat width mismatch " + first.shape().str() + " vs " + second.shape().str());
  Tensor<T> out(Shape4{first.n(), first.c() + second.c(), first.h(), first.w()});
  for (int n = 0; n < first.n(); ++n) {
    std::copy_n(first.sample(n), first.shape().sample_size(), out.sample(n));
    std::copy_n(second.sample(n), second.shape().sample_size(),
                out.sample(n) + first.shape().sample_size());
  }
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& grad, int first_channels) {
  if (first_channels < 0 || first_channels > grad.c()) {
    throw DimensionError("c", "split point outside channel range");
  }
  const Shape4 s = grad.shape();
  Tensor<T> a(Shape4{s.n, first_channels, s.h, s.w});
  Tensor<T> b(Shape4{s.n, s.c - first_channels, s.h, s.w});
  for (int n = 0; n < s.n; ++n) {
    std::copy_n(grad.sample(n), a.shape().sample_size(), a.sample(n));
    std::copy_n(grad.sample(n) + a.shape().sample_size(), b.shape().sample_size(), b.sample(n));
  }
  return {std::move(a), std::move(b)};
}

template <typename T>
Tensor<T> residual_add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "residual_add");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

#define BLASTOSEG_INSTANTIATE_ELEMENTWISE(T)                                                    \
  template PoolResult<T> maxpool2d(const Tensor<T>&, int, int);                                 \
  template Tensor<T> maxpool2d_backward(const Tensor<T>&, std::span<const std::int64_t>,       \
                                        const Shape4&);                                         \
  template Tensor<T> batchnorm(const Tensor<T>&, std::span<const T>, std::span<const T>, Mode,  \
                               BatchNormState<T>&, const BatchNormSettings&, BatchNormCache<T>*); \
  template Tensor<T> batchnorm_infer(const Tensor<T>&, std::span<const T>, std::span<const T>,  \
                                     const BatchNormState<T>&, const BatchNormSettings&);       \
  template BatchNormGradients<T> batchnorm_backward(const Tensor<T>&, const BatchNormCache<T>&, \
                                                    std::span<const T>);                        \
  template Tensor<T> relu(const Tensor<T>&);                                                    \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                 \
  template Tensor<T> sigmoid_backward(const Tensor<T>&, const Tensor<T>&);                      \
  template DropoutResult<T> dropout(const Tensor<T>&, double, std::uint64_t);                   \
  template Tensor<T> dropout_backward(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                       \
  template std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>&, int);               \
  template Tensor<T> residual_add(const Tensor<T>&, const Tensor<T>&);

BLASTOSEG_INSTANTIATE_ELEMENTWISE(float)
BLASTOSEG_INSTANTIATE_ELEMENTWISE(double)

}  // namespace blastoseg::numerics
