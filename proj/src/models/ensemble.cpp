#include <cmath>
#include <numeric>

#include "blastoseg/models.hpp"

namespace blastoseg::models {

std::vector<double> jaccard_weights(std::span<const double> jaccards) {
  if (jaccards.empty()) throw ConfigurationError("ensemble needs at least one member");
  double total = 0.0;
  for (double j : jaccards) {
    if (!(j >= 0.0) || !std::isfinite(j)) throw ConfigurationError("member scores must be finite and nonnegative");
    total += j;
  }
  if (total <= 0.0) throw ConfigurationError("member scores sum to zero");
  std::vector<double> w;
  w.reserve(jaccards.size());
  for (double j : jaccards) w.push_back(j / total);
  return w;
}

template <typename T>
EnsembleSpec<T> make_unweighted_ensemble(std::span<const SegmentationModel<T>* const> models) {
  if (models.empty()) throw ConfigurationError("ensemble needs at least one member");
  EnsembleSpec<T> spec;
  spec.scheme = EnsembleScheme::unweighted;
  for (const auto* m : models) spec.members.push_back({m, 1.0 / static_cast<double>(models.size())});
  return spec;
}

template <typename T>
EnsembleSpec<T> make_weighted_ensemble(std::span<const SegmentationModel<T>* const> models,
                                       std::span<const double> jaccards) {
  if (models.size() != jaccards.size()) {
    throw ConfigurationError("one score per ensemble member is required");
  }
  const auto w = jaccard_weights(jaccards);
  EnsembleSpec<T> spec;
  spec.scheme = EnsembleScheme::weighted;
  for (std::size_t i = 0; i < models.size(); ++i) spec.members.push_back({models[i], w[i]});
  return spec;
}

template <typename T>
Tensor<T> average_probability_maps(std::span<const Tensor<T>> maps, std::span<const double> weights,
                                   EnsembleScheme scheme) {
  if (maps.empty()) throw ConfigurationError("ensemble needs at least one member");
  if (maps.size() != weights.size()) throw ConfigurationError("one weight per probability map is required");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ConfigurationError("ensemble weights must be nonnegative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigurationError("ensemble weights must sum to 1");
  for (const auto& m : maps) numerics::require_same_shape(m.shape(), maps[0].shape(), "ensemble member");

  Tensor<T> out(maps[0].shape());
  const double count = static_cast<double>(maps.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double acc = 0.0;
    if (scheme == EnsembleScheme::unweighted) {
      for (const auto& m : maps) acc += m[i];
      acc /= count;
    } else {
      for (std::size_t k = 0; k < maps.size(); ++k) acc += weights[k] * maps[k][i];
    }
    out[i] = static_cast<T>(acc);
  }
  return out;
}

template <typename T>
Tensor<T> ensemble_predict(const EnsembleSpec<T>& spec, const Tensor<T>& batch) {
  if (spec.members.empty()) throw ConfigurationError("ensemble needs at least one member");
  std::vector<Tensor<T>> maps;
  std::vector<double> weights;
  for (const auto& m : spec.members) {
    if (m.model == nullptr) throw ConfigurationError("ensemble member is null");
    maps.push_back(m.model->predict(batch));
    weights.push_back(m.weight);
  }
  return average_probability_maps<T>(maps, weights, spec.scheme);
}

#define BLASTOSEG_INSTANTIATE_ENSEMBLE(T)                                                         \
  template EnsembleSpec<T> make_unweighted_ensemble(std::span<const SegmentationModel<T>* const>); \
  template EnsembleSpec<T> make_weighted_ensemble(std::span<const SegmentationModel<T>* const>,   \
                                                  std::span<const double>);                      \
  template Tensor<T> average_probability_maps(std::span<const Tensor<T>>, std::span<const double>, \
                                              EnsembleScheme);                                   \
  template Tensor<T> ensemble_predict(const EnsembleSpec<T>&, const Tensor<T>&);

BLASTOSEG_INSTANTIATE_ENSEMBLE(float)
BLASTOSEG_INSTANTIATE_ENSEMBLE(double)

}  // namespace blastoseg::models
