#include <cmath>
#include <sstream>

#include "blastoseg/models.hpp"

namespace blastoseg::models {

using numerics::BufferRef;
using numerics::LayerKind;
using numerics::LayerPtr;
using numerics::LayerSpec;
using numerics::Mode;
using numerics::Parameter;
using numerics::Pass;
using numerics::Shape4;

namespace {

constexpr double kHeadInitScale = 0.1;

bool residual(Architecture a) { return a == Architecture::resunet || a == Architecture::rd_unet; }
bool dilated(Architecture a) { return a == Architecture::sd_unet || a == Architecture::rd_unet; }

}  // namespace

std::string_view to_string(Architecture arch) {
  switch (arch) {
    case Architecture::unet: return "unet";
    case Architecture::sd_unet: return "sd_unet";
    case Architecture::resunet: return "resunet";
    case Architecture::rd_unet: return "rd_unet";
  }
  return "unknown";
}

Architecture parse_architecture(std::string_view name) {
  if (name == "unet") return Architecture::unet;
  if (name == "sd_unet" || name == "sd-unet") return Architecture::sd_unet;
  if (name == "resunet") return Architecture::resunet;
  if (name == "rd_unet" || name == "rd-unet") return Architecture::rd_unet;
  throw ConfigurationError("unknown model architecture '" + std::string(name) + "'");
}

template <typename T>
SegmentationModel<T>::SegmentationModel(const ModelConfig& config) : config_(config) {
  if (config.base_filters < 1) throw ConfigurationError("base_filters must be positive");
  const int unit = 1 << kDepth;
  if (config.height < unit || config.width < unit || config.height % unit != 0 ||
      config.width % unit != 0) {
    throw ConfigurationError("input " + std::to_string(config.height) + "x" +
                             std::to_string(config.width) + " is not divisible by " +
                             std::to_string(unit));
  }
  if (!(config.dropout_rate >= 0.0 && config.dropout_rate < 1.0)) {
    throw ConfigurationError("dropout rate must lie in [0, 1)");
  }
  build();
}

template <typename T>
LayerPtr<T> SegmentationModel<T>::make_block(const std::string& name, int in, int out) const {
  if (residual(config_.architecture)) {
    return std::make_unique<numerics::ResidualUnit<T>>(name, in, out, config_.dropout_rate);
  }
  auto seq = std::make_unique<numerics::Sequential<T>>(name);
  numerics::append_conv_bn_relu(*seq, name + ".block1", in, out, 1, config_.dropout_rate);
  numerics::append_conv_bn_relu(*seq, name + ".block2", out, out, 1, config_.dropout_rate);
  return seq;
}

template <typename T>
LayerPtr<T> SegmentationModel<T>::make_bridge(int in, int out) const {
  if (!dilated(config_.architecture)) return make_block("bridge", in, out);
  auto seq = std::make_unique<numerics::Sequential<T>>("bridge");
  int channels = in;
  for (std::size_t i = 0; i < kBridgeDilations.size(); ++i) {
    numerics::append_conv_bn_relu(*seq, "bridge.dilated" + std::to_string(i + 1), channels, out,
                                  kBridgeDilations[i], config_.dropout_rate);
    channels = out;
  }
  return seq;
}

template <typename T>
void SegmentationModel<T>::build() {
  const int f = config_.base_filters;
  int channels = 1;
  for (int i = 0; i < kDepth; ++i) {
    const int width = f << i;
    encoders_.push_back(make_block("enc" + std::to_string(i + 1), channels, width));
    pools_.push_back(std::make_unique<numerics::MaxPool2d<T>>("pool" + std::to_string(i + 1)));
    channels = width;
  }
  bridge_ = make_bridge(channels, bridge_width());
  channels = bridge_width();
  for (int j = 0; j < kDepth; ++j) {
    const int width = f << (kDepth - 1 - j);
    const std::string idx = std::to_string(j + 1);
    ups_.push_back(std::make_unique<numerics::ConvTranspose2d<T>>("up" + idx, channels, width));
    decoders_.push_back(make_block("dec" + idx, 2 * width, width));
    channels = width;
  }
  if (residual(config_.architecture)) {
    auto out = std::make_unique<numerics::Sequential<T>>("out");
    out->add(std::make_unique<numerics::BatchNorm2d<T>>("out.bn", channels));
    out->add(std::make_unique<numerics::ReLU<T>>("out.relu"));
    final_ = std::move(out);
  }
  head_ = std::make_unique<numerics::Conv2d<T>>("head", channels, 1, 1);
  sigmoid_ = std::make_unique<numerics::Sigmoid<T>>("output");

  for (auto& l : encoders_) l->initialize(config_.seed);
  bridge_->initialize(config_.seed);
  for (auto& l : ups_) l->initialize(config_.seed);
  for (auto& l : decoders_) l->initialize(config_.seed);
  if (final_) final_->initialize(config_.seed);
  head_->initialize(config_.seed);
  // Small head weights keep the untrained probability map close to 0.5.
  for (T& w : head_->weight().value.data()) w = static_cast<T>(w * kHeadInitScale);
}

template <typename T>
Tensor<T> SegmentationModel<T>::forward(const Tensor<T>& batch, const Pass& pass) {
  if (batch.c() != 1) throw DimensionError("c", "model expects single-channel input");
  if (batch.h() % (1 << kDepth) != 0) throw DimensionError("h", "height not divisible by 16");
  if (batch.w() % (1 << kDepth) != 0) throw DimensionError("w", "width not divisible by 16");
  std::vector<Tensor<T>> skips;
  Tensor<T> h = batch;
  for (int i = 0; i < kDepth; ++i) {
    skips.push_back(encoders_[i]->forward(h, pass));
    h = pools_[i]->forward(skips.back(), pass);
  }
  h = bridge_->forward(h, pass);
  for (int j = 0; j < kDepth; ++j) {
    Tensor<T> up = ups_[j]->forward(h, pass);
    h = decoders_[j]->forward(numerics::concat_channels(skips[kDepth - 1 - j], up), pass);
  }
  if (final_) h = final_->forward(h, pass);
  return sigmoid_->forward(head_->forward(h, pass), pass);
}

template <typename T>
Tensor<T> SegmentationModel<T>::backward(const Tensor<T>& grad_output) {
  Tensor<T> g = head_->backward(sigmoid_->backward(grad_output));
  if (final_) g = final_->backward(g);
  std::vector<Tensor<T>> skip_grads(kDepth);
  for (int j = kDepth - 1; j >= 0; --j) {
    g = decoders_[j]->backward(g);
    const int skip_channels = config_.base_filters << (kDepth - 1 - j);
    auto [gs, gu] = numerics::split_channels(g, skip_channels);
    skip_grads[kDepth - 1 - j] = std::move(gs);
    g = ups_[j]->backward(gu);
  }
  g = bridge_->backward(g);
  for (int i = kDepth - 1; i >= 0; --i) {
    g = pools_[i]->backward(g);
    const Tensor<T>& s = skip_grads[i];
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += s[k];
    g = encoders_[i]->backward(g);
  }
  return g;
}

template <typename T>
Tensor<T> SegmentationModel<T>::predict(const Tensor<T>& batch) const {
  if (batch.c() != 1) throw DimensionError("c", "model expects single-channel input");
  if (!statistics_ready()) {
    throw StateError("model batchnorm statistics are uninitialized; train the model or load a checkpoint");
  }
  std::vector<Tensor<T>> skips;
  Tensor<T> h = batch;
  for (int i = 0; i < kDepth; ++i) {
    skips.push_back(encoders_[i]->infer(h));
    h = pools_[i]->infer(skips.back());
  }
  h = bridge_->infer(h);
  for (int j = 0; j < kDepth; ++j) {
    Tensor<T> up = ups_[j]->infer(h);
    h = decoders_[j]->infer(numerics::concat_channels(skips[kDepth - 1 - j], up));
  }
  if (final_) h = final_->infer(h);
  return sigmoid_->infer(head_->infer(h));
}

template <typename T>
std::vector<Parameter<T>*> SegmentationModel<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (int i = 0; i < kDepth; ++i) encoders_[i]->collect_parameters(out);
  bridge_->collect_parameters(out);
  for (int j = 0; j < kDepth; ++j) {
    ups_[j]->collect_parameters(out);
    decoders_[j]->collect_parameters(out);
  }
  if (final_) final_->collect_parameters(out);
  head_->collect_parameters(out);
  return out;
}

template <typename T>
std::vector<BufferRef<T>> SegmentationModel<T>::buffers() {
  std::vector<BufferRef<T>> out;
  for (auto& l : encoders_) l->collect_buffers(out);
  bridge_->collect_buffers(out);
  for (auto& l : decoders_) l->collect_buffers(out);
  if (final_) final_->collect_buffers(out);
  return out;
}

template <typename T>
void SegmentationModel<T>::zero_grad() {
  for (auto* p : parameters()) p->grad.fill(T(0));
}

template <typename T>
std::size_t SegmentationModel<T>::parameter_count() const {
  std::size_t total = 0;
  for (auto* p : self().parameters()) total += p->value.size();
  return total;
}

template <typename T>
bool SegmentationModel<T>::statistics_ready() const {
  for (const auto& l : encoders_) {
    if (!l->statistics_ready()) return false;
  }
  if (!bridge_->statistics_ready()) return false;
  for (const auto& l : decoders_) {
    if (!l->statistics_ready()) return false;
  }
  return !final_ || final_->statistics_ready();
}

template <typename T>
std::vector<LayerSpec> SegmentationModel<T>::describe() const {
  std::vector<LayerSpec> out;
  for (int i = 0; i < kDepth; ++i) {
    encoders_[i]->describe(out);
    pools_[i]->describe(out);
  }
  bridge_->describe(out);
  for (int j = 0; j < kDepth; ++j) {
    ups_[j]->describe(out);
    const int width = config_.base_filters << (kDepth - 1 - j);
    out.push_back({"dec" + std::to_string(j + 1) + ".concat", LayerKind::concat, 2 * width,
                   2 * width, 0, 1, 1, 0.0});
    decoders_[j]->describe(out);
  }
  if (final_) final_->describe(out);
  head_->describe(out);
  sigmoid_->describe(out);
  return out;
}

template <typename T>
std::string SegmentationModel<T>::describe_text() const {
  std::ostringstream os;
  os << "model " << to_string(config_.architecture) << '\n'
     << "base_filters " << config_.base_filters << '\n'
     << "input 1x" << config_.height << 'x' << config_.width << '\n'
     << "dropout " << config_.dropout_rate << '\n'
     << "parameters " << parameter_count() << '\n';
  for (const auto& s : describe()) {
    os << "layer " << s.name << ' ' << numerics::to_string(s.kind);
    switch (s.kind) {
      case LayerKind::conv2d:
        os << " in=" << s.in_channels << " out=" << s.out_channels << " kernel=" << s.kernel
           << 'x' << s.kernel << " stride=" << s.stride << " dilation=" << s.dilation;
        break;
      case LayerKind::transposed_conv2d:
        os << " in=" << s.in_channels << " out=" << s.out_channels << " kernel=2x2 stride=2";
        break;
      case LayerKind::batchnorm:
      case LayerKind::concat:
        os << " channels=" << s.out_channels;
        break;
      case LayerKind::maxpool2d:
        os << " window=2x2 stride=2";
        break;
      case LayerKind::dropout:
        os << " rate=" << s.dropout_rate;
        break;
      default:
        break;
    }
    os << '\n';
  }
  return os.str();
}

template <typename T>
std::vector<int> SegmentationModel<T>::encoder_widths() const {
  std::vector<int> w;
  for (int i = 0; i < kDepth; ++i) w.push_back(config_.base_filters << i);
  return w;
}

template <typename T>
std::vector<int> SegmentationModel<T>::decoder_widths() const {
  std::vector<int> w;
  for (int j = 0; j < kDepth; ++j) w.push_back(config_.base_filters << (kDepth - 1 - j));
  return w;
}

template <typename T>
std::vector<int> SegmentationModel<T>::bridge_dilations() const {
  std::vector<LayerSpec> specs;
  bridge_->describe(specs);
  std::vector<int> d;
  for (const auto& s : specs) {
    if (s.kind == LayerKind::conv2d && s.kernel == 3) d.push_back(s.dilation);
  }
  return d;
}

template <typename T>
std::vector<Tensor<T>> SegmentationModel<T>::snapshot() const {
  std::vector<Tensor<T>> state;
  for (auto* p : self().parameters()) state.push_back(p->value);
  for (auto& b : self().buffers()) state.push_back(*b.value);
  return state;
}

template <typename T>
void SegmentationModel<T>::restore(const std::vector<Tensor<T>>& state) {
  auto params = parameters();
  auto bufs = buffers();
  if (state.size() != params.size() + bufs.size()) throw StateError("snapshot does not match model");
  std::size_t k = 0;
  for (auto* p : params) p->value = state[k++];
  for (auto& b : bufs) *b.value = state[k++];
}

template <typename T>
numerics::Checkpoint SegmentationModel<T>::to_checkpoint() const {
  numerics::Checkpoint ck;
  ck.set_meta("model", std::string(to_string(config_.architecture)));
  ck.set_meta("base_filters", std::to_string(config_.base_filters));
  ck.set_meta("height", std::to_string(config_.height));
  ck.set_meta("width", std::to_string(config_.width));
  std::ostringstream rate;
  rate << config_.dropout_rate;
  ck.set_meta("dropout", rate.str());
  ck.set_meta("statistics_ready", statistics_ready() ? "1" : "0");
  for (auto* p : self().parameters()) {
    ck.tensors.push_back({p->name, numerics::tensor_cast<float>(p->value)});
  }
  for (auto& b : self().buffers()) {
    ck.tensors.push_back({b.name, numerics::tensor_cast<float>(*b.value)});
  }
  return ck;
}

template <typename T>
void SegmentationModel<T>::load_checkpoint(const numerics::Checkpoint& ck) {
  const auto model = ck.meta("model");
  const auto filters = ck.meta("base_filters");
  if (!model || *model != to_string(config_.architecture)) {
    throw CheckpointError("architecture mismatch: checkpoint holds '" + model.value_or("?") +
                          "', model is '" + std::string(to_string(config_.architecture)) + "'");
  }
  if (!filters || *filters != std::to_string(config_.base_filters)) {
    throw CheckpointError("base_filters mismatch: checkpoint " + filters.value_or("?") +
                          ", model " + std::to_string(config_.base_filters));
  }
  auto assign = [&](const std::string& name, Tensor<T>& dst) {
    const auto* t = ck.find(name);
    if (t == nullptr) throw CheckpointError("missing tensor '" + name + "'");
    if (!(t->value.shape() == dst.shape())) {
      throw CheckpointError("shape mismatch for '" + name + "': " + t->value.shape().str() +
                            " vs " + dst.shape().str());
    }
    dst = numerics::tensor_cast<T>(t->value);
  };
  auto params = parameters();
  auto bufs = buffers();
  if (ck.tensors.size() != params.size() + bufs.size()) {
    throw CheckpointError("tensor count mismatch: checkpoint " + std::to_string(ck.tensors.size()) +
                          ", model " + std::to_string(params.size() + bufs.size()));
  }
  for (auto* p : params) assign(p->name, p->value);
  for (auto& b : bufs) assign(b.name, *b.value);
  if (ck.meta("statistics_ready").value_or("0") == "1") {
    for (auto& l : encoders_) l->mark_statistics_ready();
    bridge_->mark_statistics_ready();
    for (auto& l : decoders_) l->mark_statistics_ready();
    if (final_) final_->mark_statistics_ready();
  }
}

template <typename T>
SegmentationModel<T> SegmentationModel<T>::from_checkpoint(const numerics::Checkpoint& ck) {
  ModelConfig cfg;
  try {
    cfg.architecture = parse_architecture(ck.meta("model").value_or(""));
    cfg.base_filters = std::stoi(ck.meta("base_filters").value_or(""));
    cfg.height = std::stoi(ck.meta("height").value_or(""));
    cfg.width = std::stoi(ck.meta("width").value_or(""));
    cfg.dropout_rate = std::stod(ck.meta("dropout").value_or("0.05"));
  } catch (const std::logic_error&) {
    throw CheckpointError("checkpoint metadata does not describe a model");
  } catch (const ConfigurationError& e) {
    throw CheckpointError(e.what());
  }
  SegmentationModel m(cfg);
  m.load_checkpoint(ck);
  return m;
}

SegmentationModel<float> build_unet(int base_filters, int height, int width, std::uint64_t seed) {
  return SegmentationModel<float>({Architecture::unet, base_filters, height, width, 0.05, seed});
}
SegmentationModel<float> build_sd_unet(int base_filters, int height, int width, std::uint64_t seed) {
  return SegmentationModel<float>({Architecture::sd_unet, base_filters, height, width, 0.05, seed});
}
SegmentationModel<float> build_resunet(int base_filters, int height, int width, std::uint64_t seed) {
  return SegmentationModel<float>({Architecture::resunet, base_filters, height, width, 0.05, seed});
}
SegmentationModel<float> build_rd_unet(int base_filters, int height, int width, std::uint64_t seed) {
  return SegmentationModel<float>({Architecture::rd_unet, base_filters, height, width, 0.05, seed});
}

template class SegmentationModel<float>;
template class SegmentationModel<double>;

}  // namespace blastoseg::models
