#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "blastoseg/data.hpp"

namespace blastoseg::data {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kLobeOffset = 0.7;
constexpr double kNeckWidth = 0.6;

constexpr float kZonaLevel = 185.0f;
constexpr float kBodyLevel = 125.0f;
constexpr float kRimLevel = 150.0f;
constexpr float kLobeLevel = 145.0f;
constexpr float kIcmLevel = 105.0f;
constexpr float kDebrisLevel = 165.0f;
constexpr double kTextureAmplitude = 7.0;

double lerp(double a, double b, double t) { return a + (b - a) * t; }

double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a < 0) a += 2.0 * kPi;
  return a - kPi;
}

// Radius of an axis-aligned ellipse along direction theta.
double ellipse_radius(double rx, double ry, double theta) {
  const double c = std::cos(theta) / rx, s = std::sin(theta) / ry;
  return 1.0 / std::sqrt(c * c + s * s);
}

std::string format_id(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "b%02d", i);
  return buf;
}

struct Debris {
  double x, y, r;
};

}  // namespace

bool PhantomFrameGeometry::in_body(double x, double y) const {
  const double dx = (x - cx) / body_rx, dy = (y - cy) / body_ry;
  return dx * dx + dy * dy <= 1.0;
}

bool PhantomFrameGeometry::in_lobe(double x, double y) const {
  const double dx = x - lobe_cx, dy = y - lobe_cy;
  return dx * dx + dy * dy <= lobe_radius * lobe_radius;
}

bool PhantomFrameGeometry::in_neck(double x, double y) const {
  const double ux = std::cos(slit_angle), uy = std::sin(slit_angle);
  const double dx = x - cx, dy = y - cy;
  const double along = dx * ux + dy * uy;
  const double across = std::abs(-dx * uy + dy * ux);
  return along >= 0.0 && along <= neck_length && across <= neck_half_width;
}

bool PhantomFrameGeometry::in_zona(double x, double y) const {
  const double dx = x - cx, dy = y - cy;
  const double ox = dx / (zona_rx + zona_thickness), oy = dy / (zona_ry + zona_thickness);
  const double ix = dx / zona_rx, iy = dy / zona_ry;
  if (ox * ox + oy * oy > 1.0 || ix * ix + iy * iy < 1.0) return false;
  return std::abs(wrap_angle(std::atan2(dy, dx) - slit_angle)) > slit_half_width;
}

PhantomFrameGeometry phantom_geometry(const PhantomSpec& spec, int frame) {
  if (frame < 0 || frame >= spec.frames) throw ConfigurationError("phantom frame out of range");
  const double t = spec.frames > 1 ? static_cast<double>(frame) / (spec.frames - 1) : 1.0;
  const double s = spec.image_size;
  PhantomFrameGeometry g{};
  g.cx = spec.center_x * s;
  g.cy = spec.center_y * s;
  g.zona_rx = spec.zona_radius * s;
  g.zona_ry = spec.zona_radius * spec.aspect * s;
  g.zona_thickness = spec.zona_thickness * s;
  const double body = lerp(spec.body_start, spec.body_end, t);
  g.body_rx = body * g.zona_rx;
  g.body_ry = body * g.zona_ry;
  g.slit_angle = spec.slit_angle;
  g.slit_half_width = spec.slit_half_width;
  g.lobe_radius = lerp(spec.lobe_start, spec.lobe_end, t) * s;
  const double outer = ellipse_radius(g.zona_rx + g.zona_thickness, g.zona_ry + g.zona_thickness,
                                      spec.slit_angle);
  const double d = outer + kLobeOffset * g.lobe_radius;
  g.lobe_cx = g.cx + d * std::cos(spec.slit_angle);
  g.lobe_cy = g.cy + d * std::sin(spec.slit_angle);
  g.neck_half_width = kNeckWidth * g.lobe_radius;
  g.neck_length = d;
  return g;
}

void PhantomSpec::validate() const {
  if (image_size < 16) throw ValidationError("phantom image_size must be at least 16");
  if (frames < 1) throw ValidationError("phantom needs at least one frame");
  if (!(zona_radius > 0.0) || !(zona_thickness > 0.0)) throw ValidationError("zona radius and thickness must be positive");
  if (!(aspect >= 0.5 && aspect <= 2.0)) throw ValidationError("zona aspect must lie in [0.5, 2]");
  if (!(body_start > 0.0 && body_start <= body_end && body_end <= 1.0)) {
    throw ValidationError("body schedule must satisfy 0 < start <= end <= 1");
  }
  if (!(lobe_start > 0.0 && lobe_start <= lobe_end)) {
    throw ValidationError("lobe schedule must satisfy 0 < start <= end");
  }
  if (!(slit_half_width > 0.0 && slit_half_width < kPi / 2)) {
    throw ValidationError("slit half-width must lie in (0, pi/2)");
  }
  if (noise_level < 0.0 || debris_count < 0) throw ValidationError("noise and debris must be non-negative");

  // The largest lobe and its neck must pass through the slit without touching the zona.
  const PhantomFrameGeometry g = phantom_geometry(*this, frames - 1);
  const double inner = std::min(g.zona_rx, g.zona_ry);
  const double lobe_span = std::asin(std::min(1.0, g.lobe_radius / g.neck_length));
  const double neck_span = std::asin(std::min(1.0, g.neck_half_width / inner));
  if (lobe_span >= slit_half_width || neck_span >= slit_half_width) {
    throw ValidationError("lobe/slit geometrically inconsistent: lobe wider than the slit");
  }
  const double s = image_size;
  const double rx = g.zona_rx + g.zona_thickness, ry = g.zona_ry + g.zona_thickness;
  const bool zona_inside = g.cx - rx >= 0 && g.cx + rx <= s && g.cy - ry >= 0 && g.cy + ry <= s;
  const bool lobe_inside = g.lobe_cx - g.lobe_radius >= 0 && g.lobe_cx + g.lobe_radius <= s &&
                           g.lobe_cy - g.lobe_radius >= 0 && g.lobe_cy + g.lobe_radius <= s;
  if (!zona_inside || !lobe_inside) {
    throw ValidationError("lobe/slit geometrically inconsistent: blastocyst leaves the frame");
  }
}

std::vector<SamplePair> generate_phantoms(const PhantomSpec& spec, const std::string& source_id) {
  spec.validate();
  const int n = spec.image_size;
  const double s = n;

  // Texture phases and debris are fixed per blastocyst.
  std::mt19937_64 engine(derive_seed(spec.seed, hash_name("layout")));
  const double phase_x = uniform(engine, 0.0, 2 * kPi), phase_y = uniform(engine, 0.0, 2 * kPi);
  const PhantomFrameGeometry last = phantom_geometry(spec, spec.frames - 1);
  std::vector<Debris> debris;
  for (int k = 0, tries = 0; k < spec.debris_count && tries < 200; ++tries) {
    Debris d{uniform(engine, 0.0, s), uniform(engine, 0.0, s), uniform(engine, 0.012, 0.025) * s};
    bool clear = true;
    for (int a = 0; a < 16 && clear; ++a) {
      const double ang = 2 * kPi * a / 16;
      const double px = d.x + (d.r + 1.5) * std::cos(ang), py = d.y + (d.r + 1.5) * std::sin(ang);
      const double dx = (px - last.cx) / (last.zona_rx + last.zona_thickness);
      const double dy = (py - last.cy) / (last.zona_ry + last.zona_thickness);
      if (dx * dx + dy * dy <= 1.0 || last.in_mask(px, py)) clear = false;
    }
    const double dx = (d.x - last.cx) / (last.zona_rx + last.zona_thickness);
    const double dy = (d.y - last.cy) / (last.zona_ry + last.zona_thickness);
    const double lx = d.x - last.lobe_cx, ly = d.y - last.lobe_cy;
    if (dx * dx + dy * dy <= 1.0 || std::hypot(lx, ly) <= last.lobe_radius + d.r + 1.5) clear = false;
    if (!clear) continue;
    debris.push_back(d);
    ++k;
  }

  std::vector<SamplePair> out;
  out.reserve(static_cast<std::size_t>(spec.frames));
  for (int f = 0; f < spec.frames; ++f) {
    const PhantomFrameGeometry g = phantom_geometry(spec, f);
    std::mt19937_64 noise(derive_seed(spec.seed, static_cast<std::uint64_t>(f) + 1));
    SamplePair pair{Raster(n, n, kPhantomBackground), BinaryMask(n, n), source_id, f};
    // Inner cell mass sits opposite the slit.
    const double icm_x = g.cx - 0.45 * g.body_rx * std::cos(g.slit_angle);
    const double icm_y = g.cy - 0.45 * g.body_ry * std::sin(g.slit_angle);
    const double icm_r = 0.35 * std::min(g.body_rx, g.body_ry);
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        double v = kPhantomBackground;
        if (g.in_mask(px, py)) {
          pair.mask.at(x, y) = 1;
          if (g.in_body(px, py)) {
            const double ex = (px - g.cx) / g.body_rx, ey = (py - g.cy) / g.body_ry;
            v = ex * ex + ey * ey > 0.74 ? kRimLevel : kBodyLevel;
            if (std::hypot(px - icm_x, py - icm_y) <= icm_r) v = kIcmLevel;
          } else {
            v = kLobeLevel;
          }
          v += kTextureAmplitude * std::sin(2 * kPi * 9.0 * px / s + phase_x) *
               std::sin(2 * kPi * 7.0 * py / s + phase_y);
        } else if (g.in_zona(px, py)) {
          v = kZonaLevel;
        } else {
          for (const auto& d : debris) {
            if (std::hypot(px - d.x, py - d.y) <= d.r) v = kDebrisLevel;
          }
        }
        if (spec.noise_level > 0.0) v += spec.noise_level * normal01(noise);
        pair.image.at(x, y) = static_cast<float>(std::clamp(std::round(v), 0.0, 255.0));
      }
    }
    out.push_back(std::move(pair));
  }
  return out;
}

void PhantomDatasetSpec::validate() const {
  if (blastocysts < 1) throw ValidationError("phantom dataset needs at least one blastocyst");
  if (frames < 1) throw ValidationError("phantom dataset needs at least one frame");
  if (image_size < 16) throw ValidationError("phantom image_size must be at least 16");
  if (noise_level < 0.0 || debris_count < 0) throw ValidationError("noise and debris must be non-negative");
}

std::vector<PhantomSpec> sample_phantom_specs(const PhantomDatasetSpec& spec) {
  spec.validate();
  std::vector<PhantomSpec> specs;
  for (int b = 0; b < spec.blastocysts; ++b) {
    std::mt19937_64 engine(derive_seed(spec.seed, static_cast<std::uint64_t>(b)));
    for (int attempt = 0;; ++attempt) {
      PhantomSpec p;
      p.image_size = spec.image_size;
      p.frames = spec.frames;
      p.noise_level = spec.noise_level;
      p.debris_count = spec.debris_count;
      p.center_x = 0.5 + uniform(engine, -0.02, 0.02);
      p.center_y = 0.5 + uniform(engine, -0.02, 0.02);
      p.zona_radius = uniform(engine, 0.22, 0.26);
      p.aspect = uniform(engine, 0.92, 1.08);
      p.zona_thickness = uniform(engine, 0.03, 0.04);
      p.body_start = uniform(engine, 0.72, 0.82);
      p.body_end = uniform(engine, 0.93, 0.98);
      p.slit_angle = uniform(engine, -kPi, kPi);
      p.slit_half_width = uniform(engine, 0.36, 0.5);
      p.lobe_start = uniform(engine, 0.015, 0.03);
      p.lobe_end = uniform(engine, 0.06, 0.09);
      p.seed = derive_seed(spec.seed, hash_name(format_id(b)));
      try {
        p.validate();
      } catch (const ValidationError&) {
        if (attempt > 100) throw;
        continue;
      }
      specs.push_back(p);
      break;
    }
  }
  return specs;
}

std::vector<SamplePair> generate_phantom_dataset(const PhantomDatasetSpec& spec) {
  const auto specs = sample_phantom_specs(spec);
  std::vector<SamplePair> all;
  for (std::size_t b = 0; b < specs.size(); ++b) {
    auto frames = generate_phantoms(specs[b], format_id(static_cast<int>(b)));
    for (auto& p : frames) all.push_back(std::move(p));
  }
  return all;
}

}  // namespace blastoseg::data
