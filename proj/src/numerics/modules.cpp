#include "blastoseg/modules.hpp"

#include <cmath>
#include <random>

#include "blastoseg/random.hpp"

namespace blastoseg::numerics {

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::transposed_conv2d: return "transposed_conv2d";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::relu: return "relu";
    case LayerKind::sigmoid: return "sigmoid";
    case LayerKind::dropout: return "dropout";
    case LayerKind::concat: return "concat";
    case LayerKind::add: return "add";
  }
  return "unknown";
}

namespace {

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
void add_into(Tensor<T>& dst, const std::vector<T>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
void he_uniform(Tensor<T>& w, int fan_in, std::uint64_t seed, const std::string& name) {
  std::mt19937_64 engine(derive_seed(seed, hash_name(name)));
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(uniform(engine, -limit, limit));
}

template <typename T>
const Tensor<T>& require_cached(const Tensor<T>& cached, const std::string& layer) {
  if (cached.empty()) throw StateError("backward called before forward on layer '" + layer + "'");
  return cached;
}

}  // namespace

// --- Conv2d ---------------------------------------------------------------

template <typename T>
Conv2d<T>::Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride,
                  int dilation)
    : Layer<T>(name),
      weight_(name + ".weight", Shape4{out_channels, in_channels, kernel, kernel}),
      bias_(name + ".bias", Shape4{1, out_channels, 1, 1}),
      stride_(stride),
      dilation_(dilation) {
  if (dilation > 1 && kernel == 1) {
    throw ConfigurationError("dilation has no effect on a 1x1 kernel in layer '" + name + "'");
  }
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x, const Pass&) {
  input_ = x;
  return infer(x);
}

template <typename T>
Tensor<T> Conv2d<T>::infer(const Tensor<T>& x) const {
  return conv2d(x, weight_.value, bias_.value.data(), stride_, dilation_);
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& grad_output) {
  auto g = conv2d_backward(require_cached(input_, this->name()), weight_.value, grad_output,
                           stride_, dilation_);
  add_into(weight_.grad, g.kernels);
  add_into(bias_.grad, g.bias);
  return std::move(g.input);
}

template <typename T>
void Conv2d<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

template <typename T>
void Conv2d<T>::describe(std::vector<LayerSpec>& out) const {
  const Shape4& s = weight_.value.shape();
  out.push_back({this->name(), LayerKind::conv2d, s.c, s.n, s.h, stride_, dilation_, 0.0});
}

template <typename T>
void Conv2d<T>::initialize(std::uint64_t seed) {
  const Shape4& s = weight_.value.shape();
  he_uniform(weight_.value, s.c * s.h * s.w, seed, weight_.name);
  bias_.value.fill(T(0));
}

// --- ConvTranspose2d ------------------------------------------------------

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(std::string name, int in_channels, int out_channels)
    : Layer<T>(name),
      weight_(name + ".weight", Shape4{in_channels, out_channels, 2, 2}),
      bias_(name + ".bias", Shape4{1, out_channels, 1, 1}) {}

template <typename T>
Tensor<T> ConvTranspose2d<T>::forward(const Tensor<T>& x, const Pass&) {
  input_ = x;
  return infer(x);
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::infer(const Tensor<T>& x) const {
  return transposed_conv2d(x, weight_.value, bias_.value.data(), 2);
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::backward(const Tensor<T>& grad_output) {
  auto g = transposed_conv2d_backward(require_cached(input_, this->name()), weight_.value,
                                      grad_output, 2);
  add_into(weight_.grad, g.kernels);
  add_into(bias_.grad, g.bias);
  return std::move(g.input);
}

template <typename T>
void ConvTranspose2d<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

template <typename T>
void ConvTranspose2d<T>::describe(std::vector<LayerSpec>& out) const {
  const Shape4& s = weight_.value.shape();
  out.push_back({this->name(), LayerKind::transposed_conv2d, s.n, s.c, 2, 2, 1, 0.0});
}

template <typename T>
void ConvTranspose2d<T>::initialize(std::uint64_t seed) {
  // Each output pixel receives exactly one tap from every input channel.
  he_uniform(weight_.value, weight_.value.shape().n, seed, weight_.name);
  bias_.value.fill(T(0));
}

// --- BatchNorm2d ----------------------------------------------------------

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::string name, int channels, BatchNormSettings settings)
    : Layer<T>(name),
      gamma_(name + ".gamma", Shape4{1, channels, 1, 1}),
      beta_(name + ".beta", Shape4{1, channels, 1, 1}),
      settings_(settings),
      state_(channels) {
  gamma_.value.fill(T(1));
}

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x, const Pass& pass) {
  return batchnorm<T>(x, gamma_.value.data(), beta_.value.data(), pass.mode, state_, settings_, &cache_);
}

template <typename T>
Tensor<T> BatchNorm2d<T>::infer(const Tensor<T>& x) const {
  return batchnorm_infer(x, gamma_.value.data(), beta_.value.data(), state_, settings_);
}

template <typename T>
Tensor<T> BatchNorm2d<T>::backward(const Tensor<T>& grad_output) {
  require_cached(cache_.normalized, this->name());
  auto g = batchnorm_backward<T>(grad_output, cache_, gamma_.value.data());
  add_into(gamma_.grad, g.gamma);
  add_into(beta_.grad, g.beta);
  return std::move(g.input);
}

template <typename T>
void BatchNorm2d<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

template <typename T>
void BatchNorm2d<T>::collect_buffers(std::vector<BufferRef<T>>& out) {
  out.push_back({this->name() + ".running_mean", &state_.running_mean});
  out.push_back({this->name() + ".running_var", &state_.running_var});
}

template <typename T>
void BatchNorm2d<T>::describe(std::vector<LayerSpec>& out) const {
  const int c = gamma_.value.c();
  out.push_back({this->name(), LayerKind::batchnorm, c, c, 0, 1, 1, 0.0});
}

template <typename T>
void BatchNorm2d<T>::initialize(std::uint64_t) {
  gamma_.value.fill(T(1));
  beta_.value.fill(T(0));
}

// --- activations ----------------------------------------------------------

template <typename T>
Tensor<T> ReLU<T>::forward(const Tensor<T>& x, const Pass&) {
  input_ = x;
  return relu(x);
}

template <typename T>
Tensor<T> ReLU<T>::backward(const Tensor<T>& grad_output) {
  return relu_backward(grad_output, require_cached(input_, this->name()));
}

template <typename T>
void ReLU<T>::describe(std::vector<LayerSpec>& out) const {
  out.push_back({this->name(), LayerKind::relu, 0, 0, 0, 1, 1, 0.0});
}

template <typename T>
Tensor<T> Sigmoid<T>::forward(const Tensor<T>& x, const Pass&) {
  output_ = sigmoid(x);
  return output_;
}

template <typename T>
Tensor<T> Sigmoid<T>::backward(const Tensor<T>& grad_output) {
  return sigmoid_backward(grad_output, require_cached(output_, this->name()));
}

template <typename T>
void Sigmoid<T>::describe(std::vector<LayerSpec>& out) const {
  out.push_back({this->name(), LayerKind::sigmoid, 0, 0, 0, 1, 1, 0.0});
}

template <typename T>
Dropout<T>::Dropout(std::string name, double rate) : Layer<T>(std::move(name)), rate_(rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigurationError("dropout rate must lie in [0, 1)");
}

template <typename T>
Tensor<T> Dropout<T>::forward(const Tensor<T>& x, const Pass& pass) {
  active_ = pass.mode == Mode::train && rate_ > 0.0;
  if (!active_) return x;
  auto r = dropout(x, rate_, derive_seed(pass.seed, hash_name(this->name())));
  scale_ = std::move(r.scale);
  return std::move(r.output);
}

template <typename T>
Tensor<T> Dropout<T>::backward(const Tensor<T>& grad_output) {
  if (!active_) return grad_output;
  return dropout_backward(grad_output, scale_);
}

template <typename T>
void Dropout<T>::describe(std::vector<LayerSpec>& out) const {
  out.push_back({this->name(), LayerKind::dropout, 0, 0, 0, 1, 1, rate_});
}

template <typename T>
Tensor<T> MaxPool2d<T>::forward(const Tensor<T>& x, const Pass&) {
  auto r = maxpool2d(x);
  argmax_ = std::move(r.argmax);
  input_shape_ = x.shape();
  return std::move(r.output);
}

template <typename T>
Tensor<T> MaxPool2d<T>::backward(const Tensor<T>& grad_output) {
  if (argmax_.empty()) throw StateError("backward called before forward on layer '" + this->name() + "'");
  return maxpool2d_backward(grad_output, argmax_, input_shape_);
}

template <typename T>
void MaxPool2d<T>::describe(std::vector<LayerSpec>& out) const {
  out.push_back({this->name(), LayerKind::maxpool2d, 0, 0, 2, 2, 1, 0.0});
}

// --- Sequential -----------------------------------------------------------

template <typename T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& x, const Pass& pass) {
  Tensor<T> h = x;
  for (auto& layer : layers_) h = layer->forward(h, pass);
  return h;
}

template <typename T>
Tensor<T> Sequential<T>::backward(const Tensor<T>& grad_output) {
  Tensor<T> g = grad_output;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

template <typename T>
Tensor<T> Sequential<T>::infer(const Tensor<T>& x) const {
  Tensor<T> h = x;
  for (const auto& layer : layers_) h = layer->infer(h);
  return h;
}

template <typename T>
void Sequential<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  for (auto& layer : layers_) layer->collect_parameters(out);
}

template <typename T>
void Sequential<T>::collect_buffers(std::vector<BufferRef<T>>& out) {
  for (auto& layer : layers_) layer->collect_buffers(out);
}

template <typename T>
void Sequential<T>::describe(std::vector<LayerSpec>& out) const {
  for (const auto& layer : layers_) layer->describe(out);
}

template <typename T>
void Sequential<T>::initialize(std::uint64_t seed) {
  for (auto& layer : layers_) layer->initialize(seed);
}

template <typename T>
void Sequential<T>::mark_statistics_ready() {
  for (auto& layer : layers_) layer->mark_statistics_ready();
}

template <typename T>
bool Sequential<T>::statistics_ready() const {
  for (const auto& layer : layers_) {
    if (!layer->statistics_ready()) return false;
  }
  return true;
}

// --- ResidualUnit ---------------------------------------------------------

template <typename T>
ResidualUnit<T>::ResidualUnit(std::string name, int in_channels, int out_channels,
                              double dropout_rate)
    : Layer<T>(name), branch_(name + ".branch") {
  int channels = in_channels;
  for (int i = 1; i <= 2; ++i) {
    const std::string p = name + ".sub" + std::to_string(i);
    branch_.add(std::make_unique<BatchNorm2d<T>>(p + ".bn", channels));
    branch_.add(std::make_unique<ReLU<T>>(p + ".relu"));
    branch_.add(std::make_unique<Dropout<T>>(p + ".dropout", dropout_rate));
    branch_.add(std::make_unique<Conv2d<T>>(p + ".conv", channels, out_channels, 3));
    channels = out_channels;
  }
  if (in_channels != out_channels) {
    projection_ = std::make_unique<Conv2d<T>>(name + ".skip", in_channels, out_channels, 1);
  }
}

template <typename T>
Tensor<T> ResidualUnit<T>::forward(const Tensor<T>& x, const Pass& pass) {
  Tensor<T> residual = branch_.forward(x, pass);
  return residual_add(residual, projection_ ? projection_->forward(x, pass) : x);
}

template <typename T>
Tensor<T> ResidualUnit<T>::backward(const Tensor<T>& grad_output) {
  Tensor<T> g = branch_.backward(grad_output);
  const Tensor<T> skip = projection_ ? projection_->backward(grad_output) : grad_output;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += skip[i];
  return g;
}

template <typename T>
Tensor<T> ResidualUnit<T>::infer(const Tensor<T>& x) const {
  return residual_add(branch_.infer(x), projection_ ? projection_->infer(x) : x);
}

template <typename T>
void ResidualUnit<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  branch_.collect_parameters(out);
  if (projection_) projection_->collect_parameters(out);
}

template <typename T>
void ResidualUnit<T>::collect_buffers(std::vector<BufferRef<T>>& out) {
  branch_.collect_buffers(out);
}

template <typename T>
void ResidualUnit<T>::describe(std::vector<LayerSpec>& out) const {
  branch_.describe(out);
  if (projection_) projection_->describe(out);
  out.push_back({this->name() + ".add", LayerKind::add, 0, 0, 0, 1, 1, 0.0});
}

template <typename T>
void ResidualUnit<T>::initialize(std::uint64_t seed) {
  branch_.initialize(seed);
  if (projection_) projection_->initialize(seed);
}

template <typename T>
void append_conv_bn_relu(Sequential<T>& seq, const std::string& prefix, int in_channels,
                         int out_channels, int dilation, double dropout_rate) {
  seq.add(std::make_unique<Conv2d<T>>(prefix + ".conv", in_channels, out_channels, 3, 1, dilation));
  seq.add(std::make_unique<BatchNorm2d<T>>(prefix + ".bn", out_channels));
  seq.add(std::make_unique<ReLU<T>>(prefix + ".relu"));
  seq.add(std::make_unique<Dropout<T>>(prefix + ".dropout", dropout_rate));
}

template class Conv2d<float>;
template class Conv2d<double>;
template class ConvTranspose2d<float>;
template class ConvTranspose2d<double>;
template class BatchNorm2d<float>;
template class BatchNorm2d<double>;
template class ReLU<float>;
template class ReLU<double>;
template class Sigmoid<float>;
template class Sigmoid<double>;
template class Dropout<float>;
template class Dropout<double>;
template class MaxPool2d<float>;
template class MaxPool2d<double>;
template class Sequential<float>;
template class Sequential<double>;
template class ResidualUnit<float>;
template class ResidualUnit<double>;

template void append_conv_bn_relu(Sequential<float>&, const std::string&, int, int, int, double);
template void append_conv_bn_relu(Sequential<double>&, const std::string&, int, int, int, double);

}  // namespace blastoseg::numerics
