#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "blastoseg/tensor.hpp"

namespace blastoseg::numerics {

/// train: batch statistics, running-stat updates, dropout active.
/// deterministic: batch statistics, nothing mutated, dropout off (used by gradient checks).
/// infer: running statistics, dropout off.
enum class Mode { train, deterministic, infer };

struct ConvGeometry {
  int out_h = 0;
  int out_w = 0;
  int pad_top = 0;
  int pad_left = 0;
};

/// Zero "same" padding: output extent is ceil(input / stride).
ConvGeometry same_padding(int h, int w, int kh, int kw, int stride, int dilation);

template <typename T>
struct ConvGradients {
  Tensor<T> input;
  Tensor<T> kernels;
  std::vector<T> bias;
};

/// Cross-correlation with kernels shaped (c_out, c_in, kh, kw). `bias` may be empty.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels, std::span<const T> bias,
                 int stride = 1, int dilation = 1);

template <typename T>
ConvGradients<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernels,
                                 const Tensor<T>& grad_output, int stride = 1, int dilation = 1);

/// Up-convolution with kernels shaped (c_in, c_out, 2, 2) and stride 2; doubles h and w.
template <typename T>
Tensor<T> transposed_conv2d(const Tensor<T>& input, const Tensor<T>& kernels,
                            std::span<const T> bias, int stride = 2);

template <typename T>
ConvGradients<T> transposed_conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernels,
                                            const Tensor<T>& grad_output, int stride = 2);

template <typename T>
struct PoolResult {
  Tensor<T> output;
  /// Flat index into the input tensor of each output element's maximum.
  std::vector<std::int64_t> argmax;
};

/// Ties resolve to the first element in row-major order within the window.
template <typename T>
PoolResult<T> maxpool2d(const Tensor<T>& input, int window = 2, int stride = 2);

template <typename T>
Tensor<T> maxpool2d_backward(const Tensor<T>& grad_output, std::span<const std::int64_t> argmax,
                             const Shape4& input_shape);

struct BatchNormSettings {
  double momentum = 0.9;
  double epsilon = 1e-5;
};

template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  bool initialized = false;

  explicit BatchNormState(int channels = 0)
      : running_mean(Shape4{1, channels, 1, 1}, T(0)),
        running_var(Shape4{1, channels, 1, 1}, T(1)) {}
};

template <typename T>
struct BatchNormCache {
  Tensor<T> normalized;
  std::vector<double> inv_std;
  /// Normalized with running statistics (infer mode); the map is affine in x.
  bool frozen = false;
};

template <typename T>
struct BatchNormGradients {
  Tensor<T> input;
  std::vector<T> gamma;
  std::vector<T> beta;
};

/// Batch normalization over (n, h, w) per channel. In train mode the running
/// statistics are updated (the first call seeds them with the batch statistics);
/// deterministic mode uses batch statistics without touching `state`.
/// Infer mode requires initialized running statistics.
template <typename T>
Tensor<T> batchnorm(const Tensor<T>& input, std::span<const T> gamma, std::span<const T> beta,
                    Mode mode, BatchNormState<T>& state, const BatchNormSettings& settings = {},
                    BatchNormCache<T>* cache = nullptr);

template <typename T>
Tensor<T> batchnorm_infer(const Tensor<T>& input, std::span<const T> gamma,
                          std::span<const T> beta, const BatchNormState<T>& state,
                          const BatchNormSettings& settings = {});

template <typename T>
BatchNormGradients<T> batchnorm_backward(const Tensor<T>& grad_output,
                                         const BatchNormCache<T>& cache,
                                         std::span<const T> gamma);

template <typename T>
Tensor<T> relu(const Tensor<T>& input);
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_output, const Tensor<T>& input);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& input);
/// Uses the forward output: d/dx = y (1 - y).
template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& grad_output, const Tensor<T>& output);

template <typename T>
struct DropoutResult {
  Tensor<T> output;
  /// Per-element multiplier: 0 for dropped, 1/(1-rate) for kept.
  Tensor<T> scale;
};

/// Inverted dropout with a counter-based mask: element i is kept iff
/// uniform(seed, i) >= rate. Identical seeds give identical masks.
template <typename T>
DropoutResult<T> dropout(const Tensor<T>& input, double rate, std::uint64_t seed);
template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& grad_output, const Tensor<T>& scale);

/// Stacks along channels in (first, second) order.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& first, const Tensor<T>& second);
/// Splits a gradient into the first `first_channels` channels and the rest.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& grad, int first_channels);

template <typename T>
Tensor<T> residual_add(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace blastoseg::numerics
