#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "blastoseg/checkpoint.hpp"
#include "blastoseg/modules.hpp"

namespace blastoseg::models {

using numerics::Tensor;

enum class Architecture { unet, sd_unet, resunet, rd_unet };

/// Canonical names: unet, sd_unet, resunet, rd_unet.
std::string_view to_string(Architecture arch);
/// Accepts canonical names and the dashed CLI spellings (sd-unet, rd-unet).
Architecture parse_architecture(std::string_view name);

inline constexpr std::array<int, 5> kBridgeDilations{1, 2, 4, 8, 16};
inline constexpr int kDepth = 4;

struct ModelConfig {
  Architecture architecture = Architecture::unet;
  int base_filters = 16;
  int height = 240;
  int width = 240;
  double dropout_rate = 0.05;
  std::uint64_t seed = 0;
};

/// Explicit four-level encoder/bridge/decoder graph with a 1x1 sigmoid head.
///
/// Encoder block i has base_filters * 2^i channels, the bridge doubles once
/// more, and decoder blocks mirror the encoder (deepest first). Plain variants
/// use conv -> BN -> ReLU -> dropout blocks; residual variants use
/// pre-activation residual units. The dilated variants replace the bridge by a
/// cascade of five 3x3 convolutions with dilations 1, 2, 4, 8, 16. Residual
/// variants close the decoder with BN -> ReLU before the head.
template <typename T>
class SegmentationModel {
 public:
  explicit SegmentationModel(const ModelConfig& config);
  SegmentationModel(SegmentationModel&&) noexcept = default;
  SegmentationModel& operator=(SegmentationModel&&) noexcept = default;

  const ModelConfig& config() const noexcept { return config_; }

  /// Training-path forward; caches activations for backward().
  Tensor<T> forward(const Tensor<T>& batch, const numerics::Pass& pass);
  /// Accumulates parameter gradients; returns the gradient w.r.t. the input.
  Tensor<T> backward(const Tensor<T>& grad_output);
  /// Inference with running batchnorm statistics. Throws StateError when the
  /// statistics have never been populated.
  Tensor<T> predict(const Tensor<T>& batch) const;

  std::vector<numerics::Parameter<T>*> parameters();
  std::vector<numerics::BufferRef<T>> buffers();
  void zero_grad();
  std::size_t parameter_count() const;
  bool statistics_ready() const;

  std::vector<numerics::LayerSpec> describe() const;
  /// Human-readable graph description written next to checkpoints.
  std::string describe_text() const;

  std::vector<int> encoder_widths() const;
  std::vector<int> decoder_widths() const;
  int bridge_width() const { return config_.base_filters << kDepth; }
  /// Dilations of the bridge convolutions, in order.
  std::vector<int> bridge_dilations() const;

  numerics::Layer<T>& encoder(int i) { return *encoders_.at(i); }
  numerics::Layer<T>& bridge() { return *bridge_; }
  numerics::Layer<T>& decoder(int i) { return *decoders_.at(i); }

  /// Parameter values and running statistics, in collection order.
  std::vector<Tensor<T>> snapshot() const;
  void restore(const std::vector<Tensor<T>>& state);

  numerics::Checkpoint to_checkpoint() const;
  /// Throws CheckpointError on any architecture or tensor mismatch.
  void load_checkpoint(const numerics::Checkpoint& checkpoint);
  static SegmentationModel from_checkpoint(const numerics::Checkpoint& checkpoint);

 private:
  void build();
  numerics::LayerPtr<T> make_block(const std::string& name, int in, int out) const;
  numerics::LayerPtr<T> make_bridge(int in, int out) const;
  SegmentationModel& self() const { return const_cast<SegmentationModel&>(*this); }

  ModelConfig config_;
  std::vector<numerics::LayerPtr<T>> encoders_;
  std::vector<std::unique_ptr<numerics::MaxPool2d<T>>> pools_;
  numerics::LayerPtr<T> bridge_;
  std::vector<std::unique_ptr<numerics::ConvTranspose2d<T>>> ups_;
  std::vector<numerics::LayerPtr<T>> decoders_;
  /// Closing BN -> ReLU of the pre-activation residual variants; empty otherwise.
  numerics::LayerPtr<T> final_;
  std::unique_ptr<numerics::Conv2d<T>> head_;
  std::unique_ptr<numerics::Sigmoid<T>> sigmoid_;
};

template <typename T>
SegmentationModel<T> build_model(const ModelConfig& config) {
  return SegmentationModel<T>(config);
}

SegmentationModel<float> build_unet(int base_filters, int height, int width, std::uint64_t seed = 0);
SegmentationModel<float> build_sd_unet(int base_filters, int height, int width, std::uint64_t seed = 0);
SegmentationModel<float> build_resunet(int base_filters, int height, int width, std::uint64_t seed = 0);
SegmentationModel<float> build_rd_unet(int base_filters, int height, int width, std::uint64_t seed = 0);

// --- ensembles ------------------------------------------------------------

enum class EnsembleScheme { unweighted, weighted };

template <typename T>
struct EnsembleMember {
  const SegmentationModel<T>* model = nullptr;
  double weight = 0.0;
};

template <typename T>
struct EnsembleSpec {
  std::vector<EnsembleMember<T>> members;
  EnsembleScheme scheme = EnsembleScheme::unweighted;
};

/// Normalizes member quality scores (validation Jaccard) to unit sum.
std::vector<double> jaccard_weights(std::span<const double> jaccards);

template <typename T>
EnsembleSpec<T> make_unweighted_ensemble(std::span<const SegmentationModel<T>* const> models);
template <typename T>
EnsembleSpec<T> make_weighted_ensemble(std::span<const SegmentationModel<T>* const> models,
                                       std::span<const double> jaccards);

/// Pixelwise weighted mean of probability maps. Unweighted averaging divides
/// the sum by the member count.
template <typename T>
Tensor<T> average_probability_maps(std::span<const Tensor<T>> maps, std::span<const double> weights,
                                   EnsembleScheme scheme);

template <typename T>
Tensor<T> ensemble_predict(const EnsembleSpec<T>& spec, const Tensor<T>& batch);

extern template class SegmentationModel<float>;
extern template class SegmentationModel<double>;

}  // namespace blastoseg::models
