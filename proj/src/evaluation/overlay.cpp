#include <algorithm>
#include <cstdio>
#include <string_view>

#include "blastoseg/evaluation.hpp"

namespace blastoseg::evaluation {
namespace {

constexpr int kGlyphW = 3;
constexpr int kGlyphH = 5;

// 3x5 glyphs, one row per 3-bit value (MSB = left column).
std::array<std::uint8_t, kGlyphH> glyph(char ch) {
  switch (ch) {
    case '0': return {7, 5, 5, 5, 7};
    case '1': return {2, 6, 2, 2, 7};
    case '2': return {7, 1, 7, 4, 7};
    case '3': return {7, 1, 7, 1, 7};
    case '4': return {5, 5, 7, 1, 1};
    case '5': return {7, 4, 7, 1, 7};
    case '6': return {7, 4, 7, 5, 7};
    case '7': return {7, 1, 1, 1, 1};
    case '8': return {7, 5, 7, 5, 7};
    case '9': return {7, 5, 7, 1, 7};
    case '.': return {0, 0, 0, 0, 2};
    case '%': return {5, 1, 2, 4, 5};
    case '/': return {1, 1, 2, 4, 4};
    case 'J': return {1, 1, 1, 5, 7};
    case 'I': return {7, 2, 2, 2, 7};
    case 'D': return {6, 5, 5, 5, 6};
    case 'C': return {7, 4, 4, 4, 7};
    case 'n': return {0, 6, 5, 5, 5};
    case 'a': return {0, 3, 5, 5, 3};
    default: return {0, 0, 0, 0, 0};
  }
}

int caption_scale(int width) { return std::max(1, width / 96); }

void fill(data::RgbImage& img, int x, int y, Rgb c) { img.set(x, y, c.r, c.g, c.b); }

void draw_text(data::RgbImage& img, std::string_view text, int x0, int y0, int scale) {
  int x = x0;
  for (char ch : text) {
    const auto rows = glyph(ch);
    for (int gy = 0; gy < kGlyphH; ++gy) {
      for (int gx = 0; gx < kGlyphW; ++gx) {
        if (!((rows[static_cast<std::size_t>(gy)] >> (kGlyphW - 1 - gx)) & 1)) continue;
        for (int sy = 0; sy < scale; ++sy) {
          for (int sx = 0; sx < scale; ++sx) {
            const int px = x + gx * scale + sx, py = y0 + gy * scale + sy;
            if (px >= 0 && px < img.width && py >= 0 && py < img.height) fill(img, px, py, kCaptionInk);
          }
        }
      }
    }
    x += (kGlyphW + 1) * scale;
  }
}

}  // namespace

data::BinaryMask contour(const data::BinaryMask& mask) {
  data::BinaryMask out(mask.width, mask.height);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(x, y)) continue;
      bool edge = false;
      for (int dy = -1; dy <= 1 && !edge; ++dy) {
        for (int dx = -1; dx <= 1 && !edge; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= mask.width || ny >= mask.height || !mask.at(nx, ny)) edge = true;
        }
      }
      out.at(x, y) = edge ? 1 : 0;
    }
  }
  return out;
}

std::string overlay_caption(std::optional<double> jaccard) {
  if (!jaccard) return "JI n/a DC n/a";
  char buf[48];
  std::snprintf(buf, sizeof buf, "JI %.1f%% DC %.1f%%", 100.0 * *jaccard,
                100.0 * dice_from_jaccard(*jaccard));
  return buf;
}

int caption_height(int width) { return caption_scale(width) * (2 * (kGlyphH + 1) + 1); }

data::RgbImage render_overlay(const data::Raster& image, const data::BinaryMask& gt,
                              const data::BinaryMask& pred) {
  if (image.width != gt.width || pred.width != gt.width) throw DimensionError("w", "overlay inputs differ in width");
  if (image.height != gt.height || pred.height != gt.height) throw DimensionError("h", "overlay inputs differ in height");
  const int w = gt.width, h = gt.height;
  const int strip = caption_height(w);
  data::RgbImage out(w, h + strip);
  const data::BinaryMask edge = contour(gt);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      Rgb c = kBackgroundColor;
      if (gt.at(x, y)) c = kTruthColor;
      if (pred.at(x, y)) c = kPredictionColor;
      if (edge.at(x, y)) c = kContourColor;
      fill(out, x, y, c);
    }
  }
  for (int y = h; y < h + strip; ++y) {
    for (int x = 0; x < w; ++x) fill(out, x, y, kCaptionPaper);
  }
  const auto report = metrics(confusion(pred, gt));
  const std::string caption = overlay_caption(report.jaccard);
  const auto split = caption.find(" DC");
  const int scale = caption_scale(w);
  draw_text(out, caption.substr(0, split), scale, h + scale, scale);
  draw_text(out, caption.substr(split + 1), scale, h + scale * (kGlyphH + 2), scale);
  return out;
}

}  // namespace blastoseg::evaluation
