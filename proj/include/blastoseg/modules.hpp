#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "blastoseg/layers.hpp"

namespace blastoseg::numerics {

/// Mode plus the seed that drives dropout masks for this pass.
struct Pass {
  Mode mode = Mode::infer;
  std::uint64_t seed = 0;
};

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter(std::string n, Shape4 shape) : name(std::move(n)), value(shape), grad(shape) {}
};

/// Non-trainable state saved with a checkpoint (batchnorm running statistics).
template <typename T>
struct BufferRef {
  std::string name;
  Tensor<T>* value;
};

enum class LayerKind {
  conv2d,
  transposed_conv2d,
  maxpool2d,
  batchnorm,
  relu,
  sigmoid,
  dropout,
  concat,
  add
};

const char* to_string(LayerKind kind);

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::conv2d;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 0;
  int stride = 1;
  int dilation = 1;
  double dropout_rate = 0.0;

  bool operator==(const LayerSpec&) const = default;
};

/// A differentiable layer. forward() caches what backward() needs; infer() is
/// the side-effect-free inference path.
template <typename T>
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;

  const std::string& name() const noexcept { return name_; }

  virtual Tensor<T> forward(const Tensor<T>& x, const Pass& pass) = 0;
  virtual Tensor<T> backward(const Tensor<T>& grad_output) = 0;
  virtual Tensor<T> infer(const Tensor<T>& x) const = 0;

  virtual void collect_parameters(std::vector<Parameter<T>*>& /*out*/) {}
  virtual void collect_buffers(std::vector<BufferRef<T>>& /*out*/) {}
  virtual void describe(std::vector<LayerSpec>& out) const = 0;
  /// He-uniform weights derived from (seed, parameter name); zero biases.
  virtual void initialize(std::uint64_t /*seed*/) {}
  /// Marks batchnorm statistics usable after loading them from a checkpoint.
  virtual void mark_statistics_ready() {}
  virtual bool statistics_ready() const { return true; }

 private:
  std::string name_;
};

template <typename T>
using LayerPtr = std::unique_ptr<Layer<T>>;

template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(std::string name, int in_channels, int out_channels, int kernel = 3, int stride = 1,
         int dilation = 1);

  Tensor<T> forward(const Tensor<T>& x, const Pass& pass) override;
  Tensor<T> backward(const Tensor<T>& grad_output) override;
  Tensor<T> infer(const Tensor<T>& x) const override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  void describe(std::vector<LayerSpec>& out) const override;
  void initialize(std::uint64_t seed) override;

  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }
  int dilation() const { return dilation_; }

 private:
  Parameter<T> weight_;
  Parameter<T> bias_;
  int stride_;
  int dilation_;
  Tensor<T> input_;
};

template <typename T>
class ConvTranspose2d final : public Layer<T> {
 public:
  ConvTranspose2d(std::string name, int in_channels, int out_channels);

  Tensor<T> forward(const Tensor<T>& x, const Pass& pass) override;
  Tensor<T> backward(const Tensor<T>& grad_output) override;
  Tensor<T> infer(const Tensor<T>& x) const override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  void describe(std::vector<LayerSpec>& out) const override;
  void initialize(std::uint64_t seed) override;

  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  Parameter<T> weight_;
  Parameter<T> bias_;
  Tensor<T> input_;
};

template <typename T>
class BatchNorm2d final : public Layer<T> {
 public:
  BatchNorm2d(std::string name, int channels, BatchNormSettings settings = {});

  Tensor<T> forward(const Tensor<T>& x, const Pass& pass) override;
  Tensor<T> backward(const Tensor<T>& grad_output) override;
  Tensor<T> infer(const Tensor<T>& x) const override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  void collect_buffers(std::vector<BufferRef<T>>& out) override;
  void describe(std::vector<LayerSpec>& out) const override;
  void initialize(std::uint64_t seed) override;
  void mark_statistics_ready() override { state_.initialized = true; }
  bool statistics_ready() const override { return state_.initialized; }

  Parameter<T>& gamma() { return gamma_; }
  Parameter<T>& beta() { return beta_; }
  const BatchNormState<T>& state() const { return state_; }

 private:
  Parameter<T> gamma_;
  Parameter<T> beta_;
  BatchNormSettings settings_;
  BatchNormState<T> state_;
  BatchNormCache<T> cache_;
};

template <typename T>
class ReLU final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  Tensor<T> forward(const Tensor<T>& x, const Pass& pass) override;
  Tensor<T> backward(const Tensor<T>& grad_output) override;
  Tensor<T> infer(const Tensor<T>& x) const override { return relu(x); }
  void describe(std::vector<LayerSpec>& out) const override;
  /// Input of the most recent forward pass.
  const Tensor<T>& last_input() const noexcept { return input_; }

 private:
  Tensor<T> input_;
};

template <typename T>
class Sigmoid final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  Tensor<T> forward(const Tensor<T>& x, const Pass& pass) override;
  Tensor<T> backward(const Tensor<T>& grad_output) override;
  Tensor<T> infer(const Tensor<T>& x) const override { return sigmoid(x); }
  void describe(std::vector<LayerSpec>& out) const override;

 private:
  Tensor<T> output_;
};

/// Active only in Mode::train; the mask seed mixes the pass seed with the layer name.
template <typename T>
class Dropout final : public Layer<T> {
 public:
  Dropout(std::string name, double rate);
  Tensor<T> forward(const Tensor<T>& x, const Pass& pass) override;
  Tensor<T> backward(const Tensor<T>& grad_output) override;
  Tensor<T> infer(const Tensor<T>& x) const override { return x; }
  void describe(std::vector<LayerSpec>& out) const override;
  double rate() const { return rate_; }

 private:
  double rate_;
  bool active_ = false;
  Tensor<T> scale_;
};

template <typename T>
class MaxPool2d final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  Tensor<T> forward(const Tensor<T>& x, const Pass& pass) override;
  Tensor<T> backward(const Tensor<T>& grad_output) override;
  Tensor<T> infer(const Tensor<T>& x) const override { return maxpool2d(x).output; }
  void describe(std::vector<LayerSpec>& out) const override;

 private:
  std::vector<std::int64_t> argmax_;
  Shape4 input_shape_;
};

template <typename T>
class Sequential : public Layer<T> {
 public:
  explicit Sequential(std::string name) : Layer<T>(std::move(name)) {}

  Sequential& add(LayerPtr<T> layer) {
    layers_.push_back(std::move(layer));
    return *this;
  }

  Tensor<T> forward(const Tensor<T>& x, const Pass& pass) override;
  Tensor<T> backward(const Tensor<T>& grad_output) override;
  Tensor<T> infer(const Tensor<T>& x) const override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  void collect_buffers(std::vector<BufferRef<T>>& out) override;
  void describe(std::vector<LayerSpec>& out) const override;
  void initialize(std::uint64_t seed) override;
  void mark_statistics_ready() override;
  bool statistics_ready() const override;

  std::size_t size() const { return layers_.size(); }
  Layer<T>& at(std::size_t i) { return *layers_.at(i); }
  const Layer<T>& at(std::size_t i) const { return *layers_.at(i); }

 private:
  std::vector<LayerPtr<T>> layers_;
};

/// Pre-activation residual unit: two (BN -> ReLU -> dropout -> conv) sub-blocks
/// plus a skip from input to output. The skip is the identity when channel
/// counts match, otherwise a 1x1 convolution.
template <typename T>
class ResidualUnit final : public Layer<T> {
 public:
  ResidualUnit(std::string name, int in_channels, int out_channels, double dropout_rate);

  Tensor<T> forward(const Tensor<T>& x, const Pass& pass) override;
  Tensor<T> backward(const Tensor<T>& grad_output) override;
  Tensor<T> infer(const Tensor<T>& x) const override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  void collect_buffers(std::vector<BufferRef<T>>& out) override;
  void describe(std::vector<LayerSpec>& out) const override;
  void initialize(std::uint64_t seed) override;
  void mark_statistics_ready() override { branch_.mark_statistics_ready(); }
  bool statistics_ready() const override { return branch_.statistics_ready(); }

  bool has_projection() const { return projection_ != nullptr; }
  Sequential<T>& branch() { return branch_; }
  Conv2d<T>* projection() { return projection_.get(); }

 private:
  Sequential<T> branch_;
  std::unique_ptr<Conv2d<T>> projection_;
};

/// conv -> batchnorm -> ReLU -> dropout.
template <typename T>
void append_conv_bn_relu(Sequential<T>& seq, const std::string& prefix, int in_channels,
                         int out_channels, int dilation, double dropout_rate);

extern template class Conv2d<float>;
extern template class Conv2d<double>;
extern template class ConvTranspose2d<float>;
extern template class ConvTranspose2d<double>;
extern template class BatchNorm2d<float>;
extern template class BatchNorm2d<double>;
extern template class ReLU<float>;
extern template class ReLU<double>;
extern template class Sigmoid<float>;
extern template class Sigmoid<double>;
extern template class Dropout<float>;
extern template class Dropout<double>;
extern template class MaxPool2d<float>;
extern template class MaxPool2d<double>;
extern template class Sequential<float>;
extern template class Sequential<double>;
extern template class ResidualUnit<float>;
extern template class ResidualUnit<double>;

}  // namespace blastoseg::numerics
