#include <algorithm>
#include <cmath>

#include "blastoseg/data.hpp"

namespace blastoseg::data {

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

void RgbImage::set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const std::size_t k = (static_cast<std::size_t>(y) * width + x) * 3;
  rgb[k] = r;
  rgb[k + 1] = g;
  rgb[k + 2] = b;
}

Raster normalize(const Raster& image) {
  if (image.pixels.empty()) throw ValidationError("cannot normalize an empty image");
  const double n = static_cast<double>(image.pixels.size());
  double sum = 0.0;
  for (float v : image.pixels) sum += v;
  const double mean = sum / n;
  double sq = 0.0;
  for (float v : image.pixels) sq += (v - mean) * (v - mean);
  const double sigma = std::max(std::sqrt(sq / n), 1e-6);
  Raster out(image.width, image.height);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    out.pixels[i] = static_cast<float>((image.pixels[i] - mean) / sigma);
  }
  return out;
}

Raster resize(const Raster& image, int width, int height) {
  if (width < 1 || height < 1) throw ConfigurationError("resize target must be at least 1x1");
  if (image.width < 1 || image.height < 1) throw ValidationError("cannot resize an empty image");
  if (width == image.width && height == image.height) return image;
  Raster out(width, height);
  const double sx = static_cast<double>(image.width) / width;
  const double sy = static_cast<double>(image.height) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - x0;
      const double top = (1.0 - wx) * image.at(x0, y0) + wx * image.at(x1, y0);
      const double bottom = (1.0 - wx) * image.at(x0, y1) + wx * image.at(x1, y1);
      out.at(x, y) = static_cast<float>((1.0 - wy) * top + wy * bottom);
    }
  }
  return out;
}

BinaryMask resize(const BinaryMask& mask, int width, int height) {
  if (width < 1 || height < 1) throw ConfigurationError("resize target must be at least 1x1");
  if (mask.width < 1 || mask.height < 1) throw ValidationError("cannot resize an empty mask");
  if (width == mask.width && height == mask.height) return mask;
  BinaryMask out(width, height);
  const double sx = static_cast<double>(mask.width) / width;
  const double sy = static_cast<double>(mask.height) / height;
  for (int y = 0; y < height; ++y) {
    const int iy = std::min(static_cast<int>(std::floor((y + 0.5) * sy)), mask.height - 1);
    for (int x = 0; x < width; ++x) {
      const int ix = std::min(static_cast<int>(std::floor((x + 0.5) * sx)), mask.width - 1);
      out.at(x, y) = mask.at(ix, iy);
    }
  }
  return out;
}

SamplePair resize_pair(const SamplePair& pair, int width, int height) {
  return {resize(pair.image, width, height), resize(pair.mask, width, height), pair.source_id,
          pair.frame_index};
}

}  // namespace blastoseg::data
