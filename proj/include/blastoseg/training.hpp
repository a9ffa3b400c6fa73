#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "blastoseg/data.hpp"
#include "blastoseg/models.hpp"

namespace blastoseg::training {

using numerics::Tensor;

struct TrainConfig {
  int batch_size = 16;
  int max_epochs = 200;
  double initial_lr = 1e-4;
  double lr_factor = 0.95;
  int lr_patience = 5;
  double min_lr = 1e-6;
  int early_stop_patience = 15;
  double dropout_rate = 0.05;
  double loss_epsilon = 1.0;
  double improvement_threshold = 1e-6;
  bool augment = true;
  data::AugmentRanges augment_ranges{};
  std::uint64_t seed = 0;

  /// Throws ConfigurationError on out-of-range values.
  void validate() const;
};

// --- loss -----------------------------------------------------------------

inline constexpr double kProbabilityClamp = 1e-7;

template <typename T>
struct LossResult {
  double loss = 0.0;
  double bce = 0.0;
  /// Batch mean of the per-image soft Jaccard.
  double soft_jaccard = 0.0;
  Tensor<T> grad;
};

/// Mean BCE over every pixel plus (1 - mean per-image soft Jaccard).
/// Predictions are clamped to [1e-7, 1 - 1e-7]; the gradient is taken at the
/// clamped value. Targets outside {0, 1} raise ValidationError.
template <typename T>
LossResult<T> bce_jaccard_loss(const Tensor<T>& pred, const Tensor<T>& target, double epsilon = 1.0,
                               bool with_grad = true);

// --- optimizer ------------------------------------------------------------

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moments are kept in double.
class Adam {
 public:
  explicit Adam(AdamSettings settings = {}) : settings_(settings) {}

  /// Throws NumericalError (epoch and batch -1) naming the first parameter
  /// whose gradient is not finite; no parameter is modified in that case.
  template <typename T>
  void step(std::span<numerics::Parameter<T>* const> params, double lr);

  long step_count() const noexcept { return t_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  AdamSettings settings_;
  long t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

// --- schedules ------------------------------------------------------------

/// Multiplies the learning rate by `factor` after `patience` consecutive
/// epochs without improvement (loss < best - threshold), floored at min_lr.
/// The wait counter resets on improvement and on every reduction.
class PlateauScheduler {
 public:
  PlateauScheduler(double initial_lr, double factor, int patience, double min_lr,
                   double threshold = 1e-6);

  /// Feeds one epoch's monitored loss; returns the learning rate for the next epoch.
  double observe(double loss);

  double lr() const noexcept { return lr_; }
  int wait() const noexcept { return wait_; }
  double best() const noexcept { return best_; }

 private:
  double lr_, factor_, min_lr_, threshold_;
  int patience_;
  int wait_ = 0;
  double best_;
};

/// Signals a stop after `patience` consecutive epochs without improvement.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience, double threshold = 1e-6);

  /// Returns true when this epoch improved on the best loss so far.
  bool observe(int epoch, double loss);
  bool should_stop() const noexcept { return wait_ >= patience_; }

  int best_epoch() const noexcept { return best_epoch_; }
  double best_loss() const noexcept { return best_; }
  int wait() const noexcept { return wait_; }

 private:
  int patience_;
  double threshold_;
  int wait_ = 0;
  int best_epoch_ = 0;
  double best_;
};

// --- training loop --------------------------------------------------------

enum class StopReason { max_epochs, early_stop };
const char* to_string(StopReason reason);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_jaccard = 0.0;
  double lr = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  StopReason stop_reason = StopReason::max_epochs;
  int best_epoch = 0;

  /// Header `epoch,train_loss,val_loss,val_jaccard,lr`, values printed with
  /// 9 significant digits.
  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

/// Images are resized to the model size, optionally augmented, then z-scored.
struct Batch {
  Tensor<float> images;
  Tensor<float> masks;
};

Batch assemble_batch(std::span<const data::SamplePair> pairs, std::span<const std::size_t> indices,
                     int height, int width, std::optional<std::uint64_t> augment_seed,
                     const data::AugmentRanges& ranges = {});

/// Seeded permutation of [0, n) for one epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

struct EvalLoss {
  double loss = 0.0;
  /// Micro Jaccard of predictions thresholded at 0.5.
  double jaccard = 0.0;
};

/// Loss and Jaccard in inference mode over a whole set.
EvalLoss evaluate_loss(const models::SegmentationModel<float>& model,
                       std::span<const data::SamplePair> pairs, int batch_size, double epsilon);

struct TrainCallbacks {
  /// Called after each epoch that improves the best validation loss, with the
  /// model holding that epoch's weights.
  std::function<void(const models::SegmentationModel<float>&, const EpochRecord&)> on_best;
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Runs the epoch loop and leaves the model at its best-validation weights.
TrainHistory train(models::SegmentationModel<float>& model, std::span<const data::SamplePair> train_set,
                   std::span<const data::SamplePair> val_set, const TrainConfig& config,
                   const TrainCallbacks& callbacks = {});

}  // namespace blastoseg::training
