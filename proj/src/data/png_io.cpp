#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "blastoseg/data.hpp"

namespace blastoseg::data {
namespace {

std::vector<std::uint8_t> read_png(const std::filesystem::path& path, png_uint_32 format, int& width,
                                   int& height) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw IoError("cannot read PNG '" + path.string() + "': " + image.message);
  }
  image.format = format;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("cannot decode PNG '" + path.string() + "': " + image.message);
  }
  width = static_cast<int>(image.width);
  height = static_cast<int>(image.height);
  return buffer;
}

void write_png(const std::filesystem::path& path, png_uint_32 format, int width, int height,
               const std::uint8_t* data) {
  if (width < 1 || height < 1) throw IoError("cannot write an empty PNG '" + path.string() + "'");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, data, 0, nullptr)) {
    throw IoError("cannot write PNG '" + path.string() + "': " + image.message);
  }
}

}  // namespace

Raster read_png_gray(const std::filesystem::path& path) {
  int w = 0, h = 0;
  const auto bytes = read_png(path, PNG_FORMAT_GRAY, w, h);
  Raster r(w, h);
  std::transform(bytes.begin(), bytes.end(), r.pixels.begin(),
                 [](std::uint8_t b) { return static_cast<float>(b); });
  return r;
}

void write_png_gray(const std::filesystem::path& path, const Raster& image) {
  std::vector<std::uint8_t> bytes(image.pixels.size());
  std::transform(image.pixels.begin(), image.pixels.end(), bytes.begin(), [](float v) {
    return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0f, 255.0f));
  });
  write_png(path, PNG_FORMAT_GRAY, image.width, image.height, bytes.data());
}

BinaryMask read_png_mask(const std::filesystem::path& path) {
  int w = 0, h = 0;
  const auto bytes = read_png(path, PNG_FORMAT_GRAY, w, h);
  BinaryMask m(w, h);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    if (bytes[i] != 0 && bytes[i] != 255) {
      throw ValidationError("mask '" + path.string() + "' is not two-valued (0/255)");
    }
    m.bits[i] = bytes[i] ? 1 : 0;
  }
  return m;
}

void write_png_mask(const std::filesystem::path& path, const BinaryMask& mask) {
  std::vector<std::uint8_t> bytes(mask.bits.size());
  std::transform(mask.bits.begin(), mask.bits.end(), bytes.begin(),
                 [](std::uint8_t b) { return static_cast<std::uint8_t>(b ? 255 : 0); });
  write_png(path, PNG_FORMAT_GRAY, mask.width, mask.height, bytes.data());
}

void write_png_rgb(const std::filesystem::path& path, const RgbImage& image) {
  write_png(path, PNG_FORMAT_RGB, image.width, image.height, image.rgb.data());
}

}  // namespace blastoseg::data
