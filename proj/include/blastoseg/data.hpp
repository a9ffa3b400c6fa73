#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "blastoseg/errors.hpp"
#include "blastoseg/random.hpp"

namespace blastoseg::data {

/// Single-channel image with float intensities (0..255 for decoded 8-bit data).
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  Raster() = default;
  Raster(int w, int h, float fill = 0.0f)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  float& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const Raster&) const = default;
};

/// Two-valued mask stored as 0/1 bytes.
struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

  std::uint8_t& at(int x, int y) { return bits[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const;
  bool operator==(const BinaryMask&) const = default;
};

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}
  void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b);
};

struct SamplePair {
  Raster image;
  BinaryMask mask;
  std::string source_id;
  int frame_index = 0;
};

// --- preprocessing --------------------------------------------------------

/// Per-image z-score; the standard deviation is floored at 1e-6.
Raster normalize(const Raster& image);

/// Bilinear resampling with half-pixel centers and edge clamping.
Raster resize(const Raster& image, int width, int height);
/// Nearest-neighbour resampling; output stays two-valued.
BinaryMask resize(const BinaryMask& mask, int width, int height);

/// Reduces an image to the working resolution.
SamplePair resize_pair(const SamplePair& pair, int width, int height);

// --- augmentation ---------------------------------------------------------

struct AugmentParams {
  bool flip_horizontal = false;
  bool flip_vertical = false;
  double rotation_degrees = 0.0;
  /// Fractions of width / height.
  double shift_x = 0.0;
  double shift_y = 0.0;
  double zoom = 1.0;
};

struct AugmentRanges {
  double max_rotation_degrees = 270.0;
  double max_shift = 0.10;
  double max_zoom_delta = 0.10;
};

/// Flips each with probability 1/2, rotation in [0, max], shifts in
/// [-max, max], zoom in [1 - d, 1 + d].
AugmentParams sample_augment(std::uint64_t seed, const AugmentRanges& ranges = {});

/// Maps an output-pixel coordinate (continuous, pixel centres at i + 0.5) to
/// the input coordinate it samples.
struct InverseMap {
  double cx, cy;
  double a00, a01, a10, a11;
  double tx, ty;
  void apply(double ox, double oy, double& ix, double& iy) const;
};

InverseMap inverse_map(const AugmentParams& params, int width, int height);

/// Bilinear, zero outside the frame.
Raster transform_image(const Raster& image, const AugmentParams& params);
/// Nearest-neighbour, zero outside the frame.
BinaryMask transform_mask(const BinaryMask& mask, const AugmentParams& params);

/// Same geometric transform for image and mask.
SamplePair apply_augment(const SamplePair& pair, const AugmentParams& params);
SamplePair augment(const SamplePair& pair, std::uint64_t seed, const AugmentRanges& ranges = {});

// --- splitting ------------------------------------------------------------

struct IndexSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Seeded Fisher-Yates shuffle of [0, n), then floor(ratio * n) indices go to train.
IndexSplit split_indices(std::size_t count, double ratio, std::uint64_t seed);

/// Keeps all frames of one source together; whole groups are assigned in
/// shuffled order until the train quota floor(ratio * n) would be exceeded.
IndexSplit split_indices_grouped(const std::vector<std::string>& groups, double ratio,
                                 std::uint64_t seed);

template <typename T>
struct DatasetSplit {
  std::vector<T> train;
  std::vector<T> test;
  std::uint64_t seed = 0;
};

template <typename T>
DatasetSplit<T> split_dataset(const std::vector<T>& items, double ratio, std::uint64_t seed) {
  const IndexSplit idx = split_indices(items.size(), ratio, seed);
  DatasetSplit<T> out;
  out.seed = seed;
  for (auto i : idx.train) out.train.push_back(items[i]);
  for (auto i : idx.test) out.test.push_back(items[i]);
  return out;
}

// --- phantoms -------------------------------------------------------------

/// One synthetic zona-ablated blastocyst seen over `frames` time points.
/// Lengths are fractions of image_size unless noted.
struct PhantomSpec {
  int image_size = 500;
  int frames = 31;
  double center_x = 0.5;
  double center_y = 0.5;
  /// Inner radius of the zona ring along x; the y radius is zona_radius * aspect.
  double zona_radius = 0.30;
  double aspect = 1.0;
  double zona_thickness = 0.035;
  /// Body semi-axes as a fraction of the zona inner radii, first and last frame.
  double body_start = 0.80;
  double body_end = 0.97;
  /// Direction of the ablation slit (radians) and its angular half-width.
  double slit_angle = 0.0;
  double slit_half_width = 0.40;
  /// Herniated lobe radius, first and last frame.
  double lobe_start = 0.02;
  double lobe_end = 0.08;
  /// Gaussian noise sigma in gray levels.
  double noise_level = 6.0;
  int debris_count = 3;
  std::uint64_t seed = 0;

  /// Throws ValidationError when the geometry is inconsistent.
  void validate() const;
};

/// Analytic geometry of one frame, in pixel units.
struct PhantomFrameGeometry {
  double cx, cy;
  double zona_rx, zona_ry, zona_thickness;
  double body_rx, body_ry;
  double slit_angle, slit_half_width;
  double lobe_radius, lobe_cx, lobe_cy;
  double neck_half_width, neck_length;

  bool in_body(double x, double y) const;
  bool in_lobe(double x, double y) const;
  bool in_neck(double x, double y) const;
  bool in_mask(double x, double y) const { return in_body(x, y) || in_lobe(x, y) || in_neck(x, y); }
  bool in_zona(double x, double y) const;
};

PhantomFrameGeometry phantom_geometry(const PhantomSpec& spec, int frame);

inline constexpr float kPhantomBackground = 70.0f;

/// Renders every frame; ground-truth masks come from the analytic geometry
/// sampled at pixel centres. Deterministic per seed.
std::vector<SamplePair> generate_phantoms(const PhantomSpec& spec, const std::string& source_id);

struct PhantomDatasetSpec {
  int blastocysts = 20;
  int frames = 31;
  int image_size = 500;
  double noise_level = 6.0;
  int debris_count = 3;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Draws one PhantomSpec per blastocyst (ids b00, b01, ...).
std::vector<PhantomSpec> sample_phantom_specs(const PhantomDatasetSpec& spec);
std::vector<SamplePair> generate_phantom_dataset(const PhantomDatasetSpec& spec);

// --- files ----------------------------------------------------------------

/// 8-bit grayscale PNG. Colour inputs are converted by libpng.
Raster read_png_gray(const std::filesystem::path& path);
void write_png_gray(const std::filesystem::path& path, const Raster& image);
/// Masks on disk use 0 and 255; anything else is rejected.
BinaryMask read_png_mask(const std::filesystem::path& path);
void write_png_mask(const std::filesystem::path& path, const BinaryMask& mask);
void write_png_rgb(const std::filesystem::path& path, const RgbImage& image);

/// Dataset layout: images/<source>/<frame>.png, masks/<source>/<frame>.png and
/// manifest.csv (source_id,frame,image,mask).
void write_dataset(const std::filesystem::path& root, const std::vector<SamplePair>& pairs);
std::vector<SamplePair> read_dataset(const std::filesystem::path& root);

}  // namespace blastoseg::data
