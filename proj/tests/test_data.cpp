#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <set>

#include "blastoseg/data.hpp"
#include "oracles.hpp"

using namespace blastoseg;
using namespace blastoseg::data;

namespace {

Raster random_raster(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Raster r(w, h);
  for (auto& v : r.pixels) v = static_cast<float>(std::floor(256.0 * uniform01(rng)));
  return r;
}

BinaryMask random_mask(int w, int h, std::uint64_t seed, double p = 0.5) {
  std::mt19937_64 rng(seed);
  BinaryMask m(w, h);
  for (auto& b : m.bits) b = uniform01(rng) < p ? 1 : 0;
  return m;
}

PhantomSpec quiet_phantom() {
  PhantomSpec s;
  s.image_size = 96;
  s.frames = 30;
  s.noise_level = 0.0;
  s.debris_count = 0;
  s.slit_angle = 0.7;
  s.seed = 4;
  return s;
}

bool two_valued(const BinaryMask& m) {
  return std::all_of(m.bits.begin(), m.bits.end(), [](std::uint8_t b) { return b == 0 || b == 1; });
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("blastoseg_test_data_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("normalize") {
  Raster r(3, 1);
  r.pixels = {0.0f, 2.0f, 4.0f};
  const auto z = normalize(r);
  CHECK(z.pixels[0] == doctest::Approx(-1.2247449).epsilon(1e-6));
  CHECK(z.pixels[1] == doctest::Approx(0.0));
  CHECK(z.pixels[2] == doctest::Approx(1.2247449).epsilon(1e-6));

  const auto flat = normalize(Raster(5, 4, 77.0f));
  CHECK(std::all_of(flat.pixels.begin(), flat.pixels.end(), [](float v) { return v == 0.0f; }));

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto n = normalize(random_raster(31, 17, seed));
    double mean = 0.0, var = 0.0;
    for (float v : n.pixels) mean += v;
    mean /= n.pixels.size();
    for (float v : n.pixels) var += (v - mean) * (v - mean);
    var /= n.pixels.size();
    CHECK(std::abs(mean) < 1e-5);
    CHECK(std::abs(var - 1.0) < 1e-4);
  }
  CHECK_THROWS_AS(normalize(Raster()), ValidationError);
}

TEST_CASE("pipeline output is finite for any 8-bit input") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto n = normalize(resize(random_raster(50, 50, seed), 32, 32));
    CHECK(std::all_of(n.pixels.begin(), n.pixels.end(), [](float v) { return std::isfinite(v); }));
  }
  Raster extremes(4, 4, 255.0f);
  extremes.pixels[0] = 0.0f;
  const auto n = normalize(extremes);
  CHECK(std::all_of(n.pixels.begin(), n.pixels.end(), [](float v) { return std::isfinite(v); }));
}

TEST_CASE("resize") {
  const auto big = random_raster(500, 500, 1);
  const auto small = resize(big, 240, 240);
  CHECK(small.width == 240);
  CHECK(small.height == 240);

  const Raster flat(37, 23, 42.0f);
  for (auto [w, h] : {std::pair{10, 10}, std::pair{64, 80}, std::pair{37, 23}}) {
    const auto r = resize(flat, w, h);
    CHECK(std::all_of(r.pixels.begin(), r.pixels.end(), [](float v) { return v == doctest::Approx(42.0f); }));
  }

  const auto mask = random_mask(500, 500, 2, 0.3);
  const auto down = resize(mask, 240, 240);
  const auto up = resize(down, 500, 500);
  CHECK(two_valued(down));
  CHECK(two_valued(up));
  CHECK(up.width == 500);

  CHECK(resize(big, 500, 500) == big);
}

TEST_CASE("resize_pair keeps image and mask together") {
  PhantomSpec s = quiet_phantom();
  s.frames = 2;
  const auto pairs = generate_phantoms(s, "p");
  const auto r = resize_pair(pairs[1], 48, 48);
  CHECK(r.image.width == 48);
  CHECK(r.mask.width == 48);
  CHECK(r.source_id == "p");
  CHECK(r.frame_index == 1);
}

TEST_CASE("augmentation identities") {
  const auto img = random_raster(40, 30, 3);
  const auto mask = random_mask(40, 30, 4);
  AugmentParams flip;
  flip.flip_horizontal = true;
  CHECK(transform_image(transform_image(img, flip), flip) == img);
  CHECK(transform_mask(transform_mask(mask, flip), flip) == mask);
  flip.flip_vertical = true;
  CHECK(transform_mask(transform_mask(mask, flip), flip) == mask);

  const AugmentParams neutral;
  CHECK(transform_image(img, neutral) == img);
  CHECK(transform_mask(mask, neutral) == mask);

  AugmentParams quarter;
  quarter.rotation_degrees = 90.0;
  const BinaryMask square = random_mask(32, 32, 5);
  auto four = square;
  for (int i = 0; i < 4; ++i) four = transform_mask(four, quarter);
  CHECK(four == square);
}

TEST_CASE("augmentation samples stay in range") {
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    const auto p = sample_augment(seed);
    CHECK(p.rotation_degrees >= 0.0);
    CHECK(p.rotation_degrees <= 270.0);
    CHECK(std::abs(p.shift_x) <= 0.1);
    CHECK(std::abs(p.shift_y) <= 0.1);
    CHECK(p.zoom >= 0.9);
    CHECK(p.zoom <= 1.1);
  }
  CHECK(sample_augment(9).zoom == sample_augment(9).zoom);
}

TEST_CASE("augmented masks match independently transformed coordinates") {
  PhantomSpec s = quiet_phantom();
  s.image_size = 64;
  s.frames = 4;
  const auto pairs = generate_phantoms(s, "a");
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto& pair = pairs[seed % pairs.size()];
    const auto params = sample_augment(seed);
    const auto out = apply_augment(pair, params);
    REQUIRE(out.mask == oracle::transform_mask(pair.mask, params));
    CHECK(two_valued(out.mask));
  }
}

TEST_CASE("augmented image follows the mask") {
  // A binary image and its mask share the transform; bilinear interior pixels
  // far from any edge must keep the mask's value exactly.
  BinaryMask block(48, 48);
  Raster img(48, 48);
  for (int y = 12; y < 36; ++y)
    for (int x = 12; x < 36; ++x) {
      block.at(x, y) = 1;
      img.at(x, y) = 200.0f;
    }
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto params = sample_augment(seed);
    const auto out = apply_augment(SamplePair{img, block, "b", 0}, params);
    const auto m = out.mask;
    for (int y = 1; y < 47; ++y)
      for (int x = 1; x < 47; ++x) {
        bool uniform_patch = true;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) uniform_patch &= m.at(x + dx, y + dy) == m.at(x, y);
        if (uniform_patch) CHECK(out.image.at(x, y) == doctest::Approx(m.at(x, y) ? 200.0 : 0.0));
      }
  }
}

TEST_CASE("split") {
  const auto a = split_indices(617, 0.75, 1);
  CHECK(a.train.size() == 462);
  CHECK(a.test.size() == 155);
  const auto b = split_indices(4, 0.75, 1);
  CHECK(b.train.size() == 3);
  CHECK(b.test.size() == 1);
  const auto c = split_indices(200, 0.8, 3);
  CHECK(c.train.size() == 160);

  CHECK(split_indices(617, 0.75, 1).train == a.train);
  CHECK(split_indices(617, 0.75, 2).train != a.train);

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t n = 10 + seed * 7;
    const auto s = split_indices(n, 0.6, seed);
    std::set<std::size_t> all(s.train.begin(), s.train.end());
    for (auto i : s.test) CHECK(all.insert(i).second);
    CHECK(all.size() == n);
    CHECK(*all.rbegin() == n - 1);
  }

  CHECK_THROWS_AS(split_indices(0, 0.75, 1), ConfigurationError);
  CHECK_THROWS_AS(split_indices(10, 1.0, 1), ConfigurationError);
  CHECK_THROWS_AS(split_indices(10, 0.0, 1), ConfigurationError);

  std::vector<int> items(617);
  for (int i = 0; i < 617; ++i) items[i] = i;
  const auto ds = split_dataset(items, 0.75, 8);
  std::multiset<int> merged(ds.train.begin(), ds.train.end());
  merged.insert(ds.test.begin(), ds.test.end());
  CHECK(merged == std::multiset<int>(items.begin(), items.end()));
}

TEST_CASE("grouped split keeps sources together") {
  std::vector<std::string> groups;
  for (int b = 0; b < 20; ++b)
    for (int f = 0; f < 31; ++f) groups.push_back("b" + std::to_string(b));
  const auto s = split_indices_grouped(groups, 0.75, 3);
  std::set<std::string> train, test;
  for (auto i : s.train) train.insert(groups[i]);
  for (auto i : s.test) test.insert(groups[i]);
  for (const auto& g : train) CHECK(test.count(g) == 0);
  CHECK(s.train.size() + s.test.size() == groups.size());
  CHECK(s.train.size() <= 465);
  CHECK(s.train.size() > 0);
}

TEST_CASE("phantom frames expand monotonically") {
  const auto pairs = generate_phantoms(quiet_phantom(), "m");
  REQUIRE(pairs.size() == 30);
  for (std::size_t f = 1; f < pairs.size(); ++f) CHECK(pairs[f].mask.count() >= pairs[f - 1].mask.count());
  CHECK(pairs.back().mask.count() > pairs.front().mask.count());
}

TEST_CASE("noise-free phantom: mask is exactly the bright non-zona region") {
  const auto spec = quiet_phantom();
  const auto pairs = generate_phantoms(spec, "q");
  for (int f : {0, 14, 29}) {
    const auto g = phantom_geometry(spec, f);
    const auto& p = pairs[f];
    const double t = f / 29.0;
    const double body = spec.body_start + (spec.body_end - spec.body_start) * t;
    const double rx = body * spec.zona_radius * spec.image_size;
    const double ry = rx * spec.aspect;
    const double cx = spec.center_x * spec.image_size, cy = spec.center_y * spec.image_size;
    for (int y = 0; y < spec.image_size; ++y) {
      for (int x = 0; x < spec.image_size; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        const bool bright = p.image.at(x, y) > kPhantomBackground;
        REQUIRE(static_cast<bool>(p.mask.at(x, y)) == (bright && !g.in_zona(px, py)));
        const double ex = (px - cx) / rx, ey = (py - cy) / ry;
        if (ex * ex + ey * ey <= 1.0 - 1e-9) REQUIRE(p.mask.at(x, y) == 1);
        if (p.mask.at(x, y) == 0) REQUIRE(p.image.at(x, y) >= kPhantomBackground);
      }
    }
  }
}

TEST_CASE("phantom area matches the supersampled analytic shape") {
  const auto spec = quiet_phantom();
  const auto pairs = generate_phantoms(spec, "s");
  for (int f = 0; f < spec.frames; f += 3) {
    const double analytic = oracle::analytic_area(phantom_geometry(spec, f), spec.image_size);
    const double raster = static_cast<double>(pairs[f].mask.count());
    CHECK(std::abs(raster - analytic) / analytic < 0.02);
  }
  const auto g = phantom_geometry(spec, 0);
  const double ellipse = std::numbers::pi * g.body_rx * g.body_ry;
  CHECK(oracle::analytic_area(g, spec.image_size) >= ellipse * 0.98);
}

TEST_CASE("phantoms are deterministic per seed") {
  PhantomSpec s;
  s.image_size = 48;
  s.frames = 3;
  s.seed = 12;
  const auto a = generate_phantoms(s, "d");
  const auto b = generate_phantoms(s, "d");
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].image == b[i].image);
    CHECK(a[i].mask == b[i].mask);
  }
  s.seed = 13;
  CHECK(generate_phantoms(s, "d")[0].image != a[0].image);
}

TEST_CASE("inconsistent phantom geometry is rejected") {
  CHECK_NOTHROW(PhantomSpec{}.validate());
  PhantomSpec s = quiet_phantom();
  s.lobe_end = 0.3;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = quiet_phantom();
  s.slit_half_width = 0.05;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = quiet_phantom();
  s.body_start = 0.99;
  s.body_end = 0.9;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = quiet_phantom();
  s.zona_radius = 0.48;
  CHECK_THROWS_AS(s.validate(), ValidationError);
}

TEST_CASE("phantom datasets") {
  PhantomDatasetSpec d;
  d.blastocysts = 3;
  d.frames = 4;
  d.image_size = 64;
  d.seed = 1;
  const auto specs = sample_phantom_specs(d);
  REQUIRE(specs.size() == 3);
  for (const auto& s : specs) CHECK_NOTHROW(s.validate());
  const auto pairs = generate_phantom_dataset(d);
  REQUIRE(pairs.size() == 12);
  CHECK(pairs[0].source_id == "b00");
  CHECK(pairs[11].source_id == "b02");
  CHECK(pairs[11].frame_index == 3);
  CHECK(generate_phantom_dataset(d)[5].image == pairs[5].image);

  PhantomDatasetSpec big;
  big.blastocysts = 20;
  big.frames = 31;
  big.image_size = 24;
  CHECK(generate_phantom_dataset(big).size() == 620);
}

TEST_CASE("png round trips") {
  const auto dir = scratch("png");
  std::filesystem::create_directories(dir);
  const auto img = random_raster(23, 17, 7);
  write_png_gray(dir / "img.png", img);
  CHECK(read_png_gray(dir / "img.png") == img);

  const auto mask = random_mask(23, 17, 8);
  write_png_mask(dir / "mask.png", mask);
  CHECK(read_png_mask(dir / "mask.png") == mask);

  write_png_gray(dir / "gray.png", img);
  CHECK_THROWS_AS(read_png_mask(dir / "gray.png"), ValidationError);
  CHECK_THROWS_AS(read_png_gray(dir / "missing.png"), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("dataset layout round trip") {
  const auto dir = scratch("layout");
  PhantomDatasetSpec d;
  d.blastocysts = 2;
  d.frames = 3;
  d.image_size = 32;
  const auto pairs = generate_phantom_dataset(d);
  write_dataset(dir, pairs);
  CHECK(std::filesystem::exists(dir / "manifest.csv"));
  CHECK(std::filesystem::exists(dir / "images" / "b01" / "002.png"));
  CHECK(std::filesystem::exists(dir / "masks" / "b00" / "000.png"));
  const auto back = read_dataset(dir);
  REQUIRE(back.size() == pairs.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].image == pairs[i].image);
    CHECK(back[i].mask == pairs[i].mask);
    CHECK(back[i].source_id == pairs[i].source_id);
    CHECK(back[i].frame_index == pairs[i].frame_index);
  }
  std::filesystem::remove_all(dir);
}
