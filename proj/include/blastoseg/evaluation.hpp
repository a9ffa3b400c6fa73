#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "blastoseg/data.hpp"
#include "blastoseg/models.hpp"

namespace blastoseg::evaluation {

using numerics::Tensor;

struct MetricsCounts {
  std::uint64_t tp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const noexcept { return tp + tn + fp + fn; }
  MetricsCounts& operator+=(const MetricsCounts& o) noexcept {
    tp += o.tp;
    tn += o.tn;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  bool operator==(const MetricsCounts&) const = default;
};

enum class Scope { per_image, micro_aggregate, macro_average };
const char* to_string(Scope scope);

/// Ratios with a zero denominator are left empty (undefined).
struct MetricsReport {
  std::optional<double> accuracy;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> dice;
  std::optional<double> jaccard;
  Scope scope = Scope::per_image;
  /// Macro averages only: entries skipped per metric because they were undefined,
  /// in the order accuracy, precision, recall, dice, jaccard.
  std::array<int, 5> skipped{};
};

/// Positive iff probability >= threshold. Threshold must lie in (0, 1).
data::BinaryMask binarize(const data::Raster& probabilities, double threshold);

/// Throws DimensionError on a shape mismatch.
MetricsCounts confusion(const data::BinaryMask& pred, const data::BinaryMask& gt);

/// Accuracy, precision, recall, Dice and Jaccard from pixel counts. All-zero
/// counts raise ValidationError.
MetricsReport metrics(const MetricsCounts& counts, Scope scope = Scope::per_image);

/// Mean of each metric over the defined entries.
MetricsReport macro_average(std::span<const MetricsReport> reports);

double dice_from_jaccard(double jaccard);

enum class Category { best, better, fair, below_fair };
const char* to_string(Category category);
/// best > 0.97, better [0.95, 0.97], fair [0.90, 0.95), below_fair < 0.90.
Category categorize(double jaccard);

// --- test-set evaluation --------------------------------------------------

/// Maps a batch of normalized images (n, 1, h, w) to probability maps.
using Predictor = std::function<Tensor<float>(const Tensor<float>&)>;

Predictor model_predictor(const models::SegmentationModel<float>& model);
Predictor ensemble_predictor(const models::EnsembleSpec<float>& spec);

/// Probability maps at each pair's native resolution (bilinear restore from
/// the model's working resolution).
std::vector<data::Raster> predict_probabilities(const Predictor& predict,
                                                std::span<const data::SamplePair> pairs,
                                                int height, int width, int batch_size = 16);

struct ImageResult {
  std::string source_id;
  int frame_index = 0;
  MetricsCounts counts;
  MetricsReport report;
  /// Empty when the image's Jaccard is undefined (empty prediction and truth).
  std::optional<Category> category;
};

struct TestsetReport {
  double threshold = 0.5;
  std::vector<ImageResult> images;
  MetricsCounts total;
  MetricsReport micro;
  MetricsReport macro;
  /// Image counts per category in the order best, better, fair, below_fair.
  std::array<int, 4> histogram{};

  double category_fraction(Category c) const;
  /// One row per image followed by a summary block.
  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

TestsetReport evaluate_probabilities(std::span<const data::Raster> probabilities,
                                     std::span<const data::SamplePair> pairs, double threshold);

/// Throws ConfigurationError on an empty test set.
TestsetReport evaluate_testset(const Predictor& predict, std::span<const data::SamplePair> test_set,
                               double threshold, int height, int width, int batch_size = 16);

struct SweepRow {
  double threshold = 0.0;
  std::optional<double> micro_jaccard;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  double best_threshold = 0.5;
  /// Max minus min micro Jaccard over the grid points in [0.4, 0.6].
  double spread_mid = 0.0;
  /// spread_mid < 0.01.
  bool insensitive = false;

  std::string to_csv() const;
};

/// 0.1, 0.2, ..., 0.9.
std::vector<double> default_threshold_grid();

SweepResult threshold_sweep(std::span<const data::Raster> probabilities,
                            std::span<const data::SamplePair> pairs,
                            std::span<const double> grid);
SweepResult threshold_sweep(const Predictor& predict, std::span<const data::SamplePair> val_set,
                            int height, int width, std::span<const double> grid);

// --- overlays -------------------------------------------------------------

struct Rgb {
  std::uint8_t r, g, b;
  bool operator==(const Rgb&) const = default;
};

inline constexpr Rgb kBackgroundColor{0, 139, 139};
inline constexpr Rgb kTruthColor{144, 238, 144};
inline constexpr Rgb kPredictionColor{255, 255, 0};
inline constexpr Rgb kContourColor{255, 0, 0};
inline constexpr Rgb kCaptionInk{255, 255, 255};
inline constexpr Rgb kCaptionPaper{0, 0, 0};

/// Mask pixels with at least one background pixel (or the frame edge) in
/// their 8-neighbourhood.
data::BinaryMask contour(const data::BinaryMask& mask);

/// "JI 95.0% DC 97.4%"; "JI n/a DC n/a" when undefined.
std::string overlay_caption(std::optional<double> jaccard);

/// Palette image of the frame's size with a caption strip appended below.
/// Background cyan, truth-only light green, prediction yellow, truth contour red.
data::RgbImage render_overlay(const data::Raster& image, const data::BinaryMask& gt,
                              const data::BinaryMask& pred);

/// Height of the caption strip for a frame of the given width.
int caption_height(int width);

}  // namespace blastoseg::evaluation
