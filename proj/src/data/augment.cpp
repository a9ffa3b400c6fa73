#include <cmath>
#include <numbers>

#include "blastoseg/data.hpp"

namespace blastoseg::data {

AugmentParams sample_augment(std::uint64_t seed, const AugmentRanges& ranges) {
  std::mt19937_64 engine(seed);
  AugmentParams p;
  p.flip_horizontal = uniform01(engine) < 0.5;
  p.flip_vertical = uniform01(engine) < 0.5;
  p.rotation_degrees = uniform(engine, 0.0, ranges.max_rotation_degrees);
  p.shift_x = uniform(engine, -ranges.max_shift, ranges.max_shift);
  p.shift_y = uniform(engine, -ranges.max_shift, ranges.max_shift);
  p.zoom = uniform(engine, 1.0 - ranges.max_zoom_delta, 1.0 + ranges.max_zoom_delta);
  return p;
}

// Forward map: p -> c + shift + zoom * R(theta) * F (p - c). The inverse below
// undoes each step in reverse order.
InverseMap inverse_map(const AugmentParams& params, int width, int height) {
  if (!(params.zoom > 0.0)) throw ConfigurationError("zoom must be positive");
  const double theta = params.rotation_degrees * std::numbers::pi / 180.0;
  const double c = std::cos(theta), s = std::sin(theta);
  const double fx = params.flip_horizontal ? -1.0 : 1.0;
  const double fy = params.flip_vertical ? -1.0 : 1.0;
  InverseMap m{};
  m.cx = width / 2.0;
  m.cy = height / 2.0;
  // F^-1 R^-1 / zoom, with R^-1 = [[c, s], [-s, c]].
  m.a00 = fx * c / params.zoom;
  m.a01 = fx * s / params.zoom;
  m.a10 = -fy * s / params.zoom;
  m.a11 = fy * c / params.zoom;
  m.tx = params.shift_x * width;
  m.ty = params.shift_y * height;
  return m;
}

void InverseMap::apply(double ox, double oy, double& ix, double& iy) const {
  const double dx = ox - cx - tx;
  const double dy = oy - cy - ty;
  ix = cx + a00 * dx + a01 * dy;
  iy = cy + a10 * dx + a11 * dy;
}

Raster transform_image(const Raster& image, const AugmentParams& params) {
  const InverseMap m = inverse_map(params, image.width, image.height);
  Raster out(image.width, image.height);
  auto tap = [&](int x, int y) -> double {
    if (x < 0 || y < 0 || x >= image.width || y >= image.height) return 0.0;
    return image.at(x, y);
  };
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      double ix, iy;
      m.apply(x + 0.5, y + 0.5, ix, iy);
      // Continuous coordinate of the sample relative to pixel centres.
      const double px = ix - 0.5, py = iy - 0.5;
      const int x0 = static_cast<int>(std::floor(px));
      const int y0 = static_cast<int>(std::floor(py));
      const double wx = px - x0, wy = py - y0;
      const double v = (1 - wy) * ((1 - wx) * tap(x0, y0) + wx * tap(x0 + 1, y0)) +
                       wy * ((1 - wx) * tap(x0, y0 + 1) + wx * tap(x0 + 1, y0 + 1));
      out.at(x, y) = static_cast<float>(v);
    }
  }
  return out;
}

BinaryMask transform_mask(const BinaryMask& mask, const AugmentParams& params) {
  const InverseMap m = inverse_map(params, mask.width, mask.height);
  BinaryMask out(mask.width, mask.height);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      double ix, iy;
      m.apply(x + 0.5, y + 0.5, ix, iy);
      const int sx = static_cast<int>(std::floor(ix));
      const int sy = static_cast<int>(std::floor(iy));
      if (sx >= 0 && sy >= 0 && sx < mask.width && sy < mask.height) out.at(x, y) = mask.at(sx, sy);
    }
  }
  return out;
}

SamplePair apply_augment(const SamplePair& pair, const AugmentParams& params) {
  if (pair.image.width != pair.mask.width) throw DimensionError("w", "image and mask widths differ");
  if (pair.image.height != pair.mask.height) throw DimensionError("h", "image and mask heights differ");
  return {transform_image(pair.image, params), transform_mask(pair.mask, params), pair.source_id,
          pair.frame_index};
}

SamplePair augment(const SamplePair& pair, std::uint64_t seed, const AugmentRanges& ranges) {
  return apply_augment(pair, sample_augment(seed, ranges));
}

}  // namespace blastoseg::data
