#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "blastoseg/data.hpp"
#include "blastoseg/evaluation.hpp"
#include "blastoseg/models.hpp"
#include "blastoseg/training.hpp"

namespace blastoseg::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitNumerical = 2;
inline constexpr int kExitUsage = 64;
inline constexpr int kExitCheckpoint = 65;

inline constexpr const char* kThreadsVariable = "BLASTOSEG_THREADS";

// --- key=value configuration ------------------------------------------------

/// Ordered `key = value` pairs. Blank lines and `#` comments are ignored.
using KeyValues = std::vector<std::pair<std::string, std::string>>;

KeyValues parse_key_values(const std::string& text);
KeyValues read_key_values(const std::filesystem::path& path);
std::string format_key_values(const KeyValues& values);
void write_key_values(const std::filesystem::path& path, const KeyValues& values);

KeyValues to_key_values(const data::PhantomDatasetSpec& spec);
/// Unknown keys or malformed values raise ConfigurationError.
void apply_key_values(data::PhantomDatasetSpec& spec, const KeyValues& values);

// --- splits -----------------------------------------------------------------

/// How a dataset is divided into train / validation / test. Recorded in
/// checkpoints so evaluation can re-derive the frozen test set.
struct SplitSettings {
  /// Use a seeded subset of this many pairs first (0 = all).
  int subset = 0;
  /// Fraction of the (subset) dataset used for training + validation.
  double split_ratio = 0.75;
  /// Fraction of the training portion carved out for validation.
  double val_ratio = 0.15;
  bool grouped = false;
  std::uint64_t seed = 0;

  void validate() const;
  void to_meta(numerics::Checkpoint& checkpoint) const;
  static SplitSettings from_meta(const numerics::Checkpoint& checkpoint);
  bool operator==(const SplitSettings&) const = default;
};

struct DataSplits {
  std::vector<data::SamplePair> train;
  std::vector<data::SamplePair> val;
  std::vector<data::SamplePair> test;
  /// Dataset indices of each part.
  std::vector<std::size_t> train_index;
  std::vector<std::size_t> val_index;
  std::vector<std::size_t> test_index;

  std::string to_csv(const std::vector<data::SamplePair>& pairs) const;
};

DataSplits make_splits(const std::vector<data::SamplePair>& pairs, const SplitSettings& settings);

// --- commands ---------------------------------------------------------------

struct GenerateOptions {
  data::PhantomDatasetSpec spec;
  std::filesystem::path out;
};

/// Writes the dataset layout plus phantom_spec.txt.
void cmd_generate(const GenerateOptions& options, std::ostream& log);

struct TrainOptions {
  std::filesystem::path data;
  std::filesystem::path out;
  models::Architecture architecture = models::Architecture::rd_unet;
  int base_filters = 16;
  int size = 240;
  training::TrainConfig train;
  SplitSettings split;

  KeyValues to_key_values() const;
  /// Unknown keys or malformed values raise ConfigurationError.
  void apply(const KeyValues& values);
};

/// Writes best.ckpt, best.arch.txt, history.csv, split.csv, config.txt and
/// summary.txt to the output directory.
training::TrainHistory cmd_train(const TrainOptions& options, std::ostream& log);

enum class ModelChoice {
  automatic,
  unet,
  sd_unet,
  resunet,
  rd_unet,
  ensemble_unweighted,
  ensemble_weighted
};

/// unet, sd-unet, resunet, rd-unet, ensemble-unweighted, ensemble-weighted
/// (underscores also accepted). Throws ConfigurationError otherwise.
ModelChoice parse_model_choice(const std::string& name);

struct EvalOptions {
  std::filesystem::path data;
  std::vector<std::filesystem::path> checkpoints;
  ModelChoice model = ModelChoice::automatic;
  double threshold = 0.5;
  bool sweep = false;
  bool overlays = true;
  std::filesystem::path out;
  int batch_size = 16;
};

/// report.csv for the requested model (or ensemble), member_<k>_report.csv
/// for ensemble members, overlays/ and, with sweep, sweep.csv.
evaluation::TestsetReport cmd_eval(const EvalOptions& options, std::ostream& log);

/// sweep.csv on the validation split.
evaluation::SweepResult cmd_sweep(const EvalOptions& options, std::ostream& log);

struct SegmentOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path image;
  std::filesystem::path out;
  std::optional<std::filesystem::path> overlay_truth;
  double threshold = 0.5;
};

/// Writes the binary mask PNG (0/255) at the input image's size.
void cmd_segment(const SegmentOptions& options, std::ostream& log);

/// Full command-line entry point; returns the process exit code. Failures
/// print a single `error: ...` line to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace blastoseg::cli
