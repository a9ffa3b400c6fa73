#include <doctest.h>

#include <cmath>
#include <random>
#include <set>
#include <tuple>

#include "blastoseg/evaluation.hpp"
#include "oracles.hpp"

using namespace blastoseg;
using namespace blastoseg::evaluation;
using data::BinaryMask;
using data::Raster;

namespace {

BinaryMask random_mask(int w, int h, std::mt19937_64& rng, double p) {
  BinaryMask m(w, h);
  for (auto& b : m.bits) b = uniform01(rng) < p ? 1 : 0;
  return m;
}

BinaryMask disk(int size, double r) {
  BinaryMask m(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      if (std::hypot(x + 0.5 - size / 2.0, y + 0.5 - size / 2.0) <= r) m.at(x, y) = 1;
  return m;
}

// 4x4 pair with TP=5, TN=9, FP=1, FN=1.
std::pair<BinaryMask, BinaryMask> hand_pair() {
  BinaryMask gt(4, 4), pred(4, 4);
  for (int i = 0; i < 6; ++i) gt.bits[i] = 1;
  for (int i = 0; i < 5; ++i) pred.bits[i] = 1;
  pred.bits[15] = 1;
  return {pred, gt};
}

std::set<std::tuple<int, int, int>> colours(const data::RgbImage& img, int rows) {
  std::set<std::tuple<int, int, int>> out;
  for (int i = 0; i < img.width * rows; ++i) out.emplace(img.rgb[3 * i], img.rgb[3 * i + 1], img.rgb[3 * i + 2]);
  return out;
}

std::tuple<int, int, int> at(const data::RgbImage& img, int x, int y) {
  const std::size_t i = 3 * (static_cast<std::size_t>(y) * img.width + x);
  return {img.rgb[i], img.rgb[i + 1], img.rgb[i + 2]};
}

std::tuple<int, int, int> tup(Rgb c) { return {c.r, c.g, c.b}; }

}  // namespace

TEST_CASE("binarize") {
  const Raster half(5, 5, 0.5f);
  const auto all = binarize(half, 0.5);
  CHECK(all.count() == 25);
  Raster two(2, 1);
  two.pixels = {0.1f, 0.9f};
  CHECK(binarize(two, 0.5).bits == std::vector<std::uint8_t>{0, 1});
  CHECK(binarize(Raster(4, 4, 0.55f), 0.9).count() == 0);
  CHECK_THROWS_AS(binarize(half, 1.0), ConfigurationError);
  CHECK_THROWS_AS(binarize(half, 0.0), ConfigurationError);
}

TEST_CASE("confusion counts") {
  const auto [pred, gt] = hand_pair();
  CHECK(confusion(pred, gt) == MetricsCounts{5, 9, 1, 1});
  const auto same = confusion(gt, gt);
  CHECK(same.fp == 0);
  CHECK(same.fn == 0);
  BinaryMask inv = gt;
  for (auto& b : inv.bits) b = 1 - b;
  const auto opp = confusion(inv, gt);
  CHECK(opp.tp == 0);
  CHECK(opp.tn == 0);
  CHECK_THROWS_AS(confusion(BinaryMask(4, 5), gt), DimensionError);
  CHECK_THROWS_AS(confusion(BinaryMask(5, 4), gt), DimensionError);
}

TEST_CASE("metrics from counts") {
  const auto r = metrics({5, 9, 1, 1});
  CHECK(*r.accuracy == doctest::Approx(0.875).epsilon(1e-15));
  CHECK(*r.precision == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  CHECK(*r.recall == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  CHECK(*r.dice == doctest::Approx(10.0 / 12.0).epsilon(1e-15));
  CHECK(*r.jaccard == doctest::Approx(5.0 / 7.0).epsilon(1e-15));

  const auto perfect = metrics({10, 6, 0, 0});
  for (auto v : {perfect.accuracy, perfect.precision, perfect.recall, perfect.dice, perfect.jaccard}) CHECK(*v == 1.0);

  const auto empty = metrics({0, 16, 0, 0});
  CHECK(*empty.accuracy == 1.0);
  CHECK_FALSE(empty.precision.has_value());
  CHECK_FALSE(empty.recall.has_value());
  CHECK_FALSE(empty.dice.has_value());
  CHECK_FALSE(empty.jaccard.has_value());

  const auto no_pred = metrics({0, 10, 0, 6});
  CHECK_FALSE(no_pred.precision.has_value());
  CHECK(*no_pred.recall == 0.0);
  CHECK(*no_pred.jaccard == 0.0);

  CHECK_THROWS_AS(metrics({0, 0, 0, 0}), ValidationError);
}

TEST_CASE("metrics agree with a per-pixel oracle on random pairs") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const int w = 1 + static_cast<int>(uniform01(rng) * 32), h = 1 + static_cast<int>(uniform01(rng) * 32);
    const double pp = uniform01(rng), pg = uniform01(rng);
    const auto pred = random_mask(w, h, rng, pp), gt = random_mask(w, h, rng, pg);
    const auto c = confusion(pred, gt);
    const auto o = oracle::classify(pred, gt);
    REQUIRE(c == MetricsCounts{o.tp, o.tn, o.fp, o.fn});
    const auto r = metrics(c);
    const double tp = o.tp, tn = o.tn, fp = o.fp, fn = o.fn;
    CHECK(std::abs(*r.accuracy - (tp + tn) / (tp + tn + fp + fn)) <= 1e-12);
    if (o.tp + o.fp > 0) CHECK(std::abs(*r.precision - tp / (tp + fp)) <= 1e-12);
    else CHECK_FALSE(r.precision.has_value());
    if (o.tp + o.fn > 0) CHECK(std::abs(*r.recall - tp / (tp + fn)) <= 1e-12);
    else CHECK_FALSE(r.recall.has_value());
    if (o.tp + o.fp + o.fn > 0) {
      CHECK(std::abs(*r.dice - 2 * tp / (2 * tp + fp + fn)) <= 1e-12);
      CHECK(std::abs(*r.jaccard - tp / (tp + fp + fn)) <= 1e-12);
      CHECK(std::abs(*r.dice - dice_from_jaccard(*r.jaccard)) <= 1e-12);
      CHECK(*r.dice >= *r.jaccard);
      for (auto v : {r.accuracy, r.precision, r.recall, r.dice, r.jaccard})
        if (v) CHECK((*v >= 0.0 && *v <= 1.0));
    } else {
      CHECK_FALSE(r.jaccard.has_value());
    }
  }
}

TEST_CASE("dice from jaccard reproduces the reported pairs") {
  CHECK(dice_from_jaccard(0.969) == doctest::Approx(0.98425).epsilon(1e-5));
  // Per-image captions shown beside the example segmentations: (JI, DC) in percent.
  const std::pair<double, double> captions[] = {{98.5, 99.3}, {97.8, 98.9}, {96.9, 98.5},
                                                {95.5, 97.7}, {90.6, 95.1}, {93.0, 96.4}};
  for (auto [j, d] : captions) {
    const double dc = 100.0 * dice_from_jaccard(j / 100.0);
    CHECK(std::abs(std::round(dc * 10.0) / 10.0 - d) <= 0.1 + 1e-9);
  }
}

TEST_CASE("categories") {
  CHECK(categorize(0.98) == Category::best);
  CHECK(categorize(0.97) == Category::better);
  CHECK(categorize(0.95) == Category::better);
  CHECK(categorize(0.93) == Category::fair);
  CHECK(categorize(0.90) == Category::fair);
  CHECK(categorize(0.5) == Category::below_fair);
  CHECK(std::string(to_string(Category::below_fair)) == "below_fair");

  // Two images at 0.98 and 0.93 give one best and one fair.
  std::vector<Raster> probs;
  std::vector<data::SamplePair> pairs;
  for (int tp : {98, 93}) {
    BinaryMask gt(10, 10), pred(10, 10);
    for (int i = 0; i < 100; ++i) gt.bits[i] = 1;
    for (int i = 0; i < tp; ++i) pred.bits[i] = 1;
    Raster p(10, 10);
    for (int i = 0; i < 100; ++i) p.pixels[i] = pred.bits[i] ? 0.9f : 0.1f;
    probs.push_back(p);
    pairs.push_back({Raster(10, 10), gt, "x", tp});
  }
  const auto rep = evaluate_probabilities(probs, pairs, 0.5);
  CHECK(rep.histogram == std::array<int, 4>{1, 0, 1, 0});
  CHECK(rep.category_fraction(Category::best) == 0.5);
  CHECK(*rep.images[0].category == Category::best);
  CHECK(*rep.images[1].category == Category::fair);
}

TEST_CASE("categorization partitions the Jaccard range") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 1000; ++i) {
    const double j = uniform01(rng);
    const int hits = (j > 0.97) + (j >= 0.95 && j <= 0.97) + (j >= 0.90 && j < 0.95) + (j < 0.90);
    CHECK(hits == 1);
    const auto c = categorize(j);
    CHECK(c == (j > 0.97 ? Category::best : j >= 0.95 ? Category::better : j >= 0.90 ? Category::fair : Category::below_fair));
  }
}

TEST_CASE("micro and macro aggregation") {
  std::mt19937_64 rng(5);
  SUBCASE("single image: micro = macro = per image") {
    const auto gt = random_mask(16, 16, rng, 0.5);
    Raster p(16, 16);
    for (auto& v : p.pixels) v = static_cast<float>(uniform01(rng));
    const std::vector<Raster> probs{p};
    const std::vector<data::SamplePair> pairs{{Raster(16, 16), gt, "s", 0}};
    const auto rep = evaluate_probabilities(probs, pairs, 0.5);
    CHECK(*rep.micro.jaccard == *rep.images[0].report.jaccard);
    CHECK(*rep.macro.jaccard == doctest::Approx(*rep.images[0].report.jaccard).epsilon(1e-15));
    CHECK(*rep.macro.accuracy == doctest::Approx(*rep.micro.accuracy).epsilon(1e-15));
    CHECK(rep.micro.scope == Scope::micro_aggregate);
    CHECK(rep.macro.scope == Scope::macro_average);
  }
  SUBCASE("micro Jaccard equals the Jaccard of the concatenated image") {
    std::vector<Raster> probs;
    std::vector<data::SamplePair> pairs;
    BinaryMask big_gt(12, 12 * 5), big_pred(12, 12 * 5);
    for (int k = 0; k < 5; ++k) {
      const auto gt = random_mask(12, 12, rng, 0.4), pred = random_mask(12, 12, rng, 0.4);
      Raster p(12, 12);
      for (int i = 0; i < 144; ++i) p.pixels[i] = pred.bits[i] ? 0.8f : 0.2f;
      probs.push_back(p);
      pairs.push_back({Raster(12, 12), gt, "c", k});
      std::copy(gt.bits.begin(), gt.bits.end(), big_gt.bits.begin() + 144 * k);
      std::copy(pred.bits.begin(), pred.bits.end(), big_pred.bits.begin() + 144 * k);
    }
    const auto rep = evaluate_probabilities(probs, pairs, 0.5);
    CHECK(*rep.micro.jaccard == *metrics(confusion(big_pred, big_gt)).jaccard);
    CHECK(rep.total == confusion(big_pred, big_gt));
  }
  SUBCASE("macro averages skip undefined entries") {
    std::vector<MetricsReport> reps{metrics({0, 16, 0, 0}), metrics({4, 8, 2, 2})};
    const auto m = macro_average(reps);
    CHECK(*m.jaccard == doctest::Approx(0.5));
    CHECK(m.skipped[4] == 1);
    CHECK(m.skipped[0] == 0);
    CHECK(*m.accuracy == doctest::Approx(0.875));
  }
}

TEST_CASE("report csv marks undefined values") {
  const std::vector<Raster> probs{Raster(4, 4, 0.1f)};
  const std::vector<data::SamplePair> pairs{{Raster(4, 4), BinaryMask(4, 4), "e", 3}};
  const auto rep = evaluate_probabilities(probs, pairs, 0.5);
  const auto csv = rep.to_csv();
  CHECK(csv.rfind("source_id,frame,threshold,tp,tn,fp,fn,accuracy,precision,recall,dice,jaccard,category\n", 0) == 0);
  CHECK(csv.find("e,3,0.5,0,16,0,0,1,undefined,undefined,undefined,undefined,undefined") != std::string::npos);
  CHECK(csv.find("\nmicro,0.5,0,16,0,0,1,undefined") != std::string::npos);
  CHECK(csv.find("\nmacro,0.5,,,,,1,undefined") != std::string::npos);
  CHECK(csv.find("category,count,fraction") != std::string::npos);
}

TEST_CASE("empty test sets are rejected") {
  const Predictor p = [](const Tensor<float>& x) { return x; };
  CHECK_THROWS_AS(evaluate_testset(p, {}, 0.5, 16, 16), ConfigurationError);
}

TEST_CASE("predicted probabilities are restored to native size") {
  const Predictor constant = [](const Tensor<float>& x) { return Tensor<float>(x.shape(), 0.7f); };
  std::vector<data::SamplePair> pairs{{Raster(50, 40, 3.0f), BinaryMask(50, 40), "r", 0}};
  const auto maps = predict_probabilities(constant, pairs, 32, 32);
  REQUIRE(maps.size() == 1);
  CHECK(maps[0].width == 50);
  CHECK(maps[0].height == 40);
  for (float v : maps[0].pixels) CHECK(v == doctest::Approx(0.7f));
}

TEST_CASE("threshold sweep") {
  const auto grid = default_threshold_grid();
  REQUIRE(grid.size() == 9);
  CHECK(grid.front() == doctest::Approx(0.1));
  CHECK(grid.back() == doctest::Approx(0.9));

  std::mt19937_64 rng(9);
  const auto gt = random_mask(16, 16, rng, 0.5);
  const std::vector<Raster> probs{Raster(16, 16, 0.5f)};
  const std::vector<data::SamplePair> pairs{{Raster(16, 16), gt, "t", 0}};
  const auto s = threshold_sweep(probs, pairs, grid);
  REQUIRE(s.rows.size() == 9);
  for (std::size_t i = 0; i < 5; ++i) CHECK(*s.rows[i].micro_jaccard == *s.rows[0].micro_jaccard);
  CHECK(*s.rows[5].micro_jaccard == 0.0);
  CHECK(s.best_threshold == doctest::Approx(0.1));
  CHECK(s.spread_mid == *s.rows[3].micro_jaccard);
  CHECK_FALSE(s.insensitive);
  const auto csv = s.to_csv();
  CHECK(std::count(csv.begin(), csv.end(), '\n') >= 10);

  const Raster confident = [&] {
    Raster r(16, 16);
    for (int i = 0; i < 256; ++i) r.pixels[i] = gt.bits[i] ? 0.97f : 0.02f;
    return r;
  }();
  const std::vector<Raster> good{confident};
  const auto g = threshold_sweep(good, pairs, grid);
  CHECK(g.insensitive);
  CHECK(g.spread_mid == 0.0);
}

TEST_CASE("contour") {
  const auto m = disk(20, 6.0);
  const auto c = contour(m);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x) {
      bool border = false;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= 20 || ny >= 20 || !m.at(nx, ny)) border = true;
        }
      CHECK(c.at(x, y) == (m.at(x, y) && border ? 1 : 0));
    }
  BinaryMask full(5, 5);
  for (auto& b : full.bits) b = 1;
  const auto edge = contour(full);
  CHECK(edge.count() == 16);
}

TEST_CASE("overlay rendering") {
  const int n = 32;
  const auto gt = disk(n, 9.0);
  const Raster img(n, n, 100.0f);
  const auto palette = std::set{tup(kBackgroundColor), tup(kTruthColor), tup(kPredictionColor), tup(kContourColor)};

  SUBCASE("perfect prediction hides the truth colour") {
    const auto o = render_overlay(img, gt, gt);
    CHECK(o.height == n + caption_height(n));
    const auto seen = colours(o, n);
    CHECK(seen.size() <= 4);
    for (const auto& c : seen) CHECK(palette.count(c) == 1);
    CHECK(seen.count(tup(kTruthColor)) == 0);
    const auto edge = contour(gt);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const auto c = at(o, x, y);
        if (edge.at(x, y)) CHECK(c == tup(kContourColor));
        else if (gt.at(x, y)) CHECK(c == tup(kPredictionColor));
        else CHECK(c == tup(kBackgroundColor));
      }
  }
  SUBCASE("empty prediction shows the truth with its contour on the background") {
    const auto o = render_overlay(img, gt, BinaryMask(n, n));
    const auto seen = colours(o, n);
    CHECK(seen == std::set{tup(kBackgroundColor), tup(kTruthColor), tup(kContourColor)});
  }
  SUBCASE("caption strip holds only ink and paper") {
    const auto o = render_overlay(img, gt, gt);
    std::set<std::tuple<int, int, int>> strip;
    for (int y = n; y < o.height; ++y)
      for (int x = 0; x < n; ++x) strip.insert(at(o, x, y));
    CHECK(strip == std::set{tup(kCaptionInk), tup(kCaptionPaper)});
  }
  SUBCASE("mismatched shapes") {
    CHECK_THROWS_AS(render_overlay(Raster(n, n + 1), gt, gt), DimensionError);
  }
}

TEST_CASE("overlay caption") {
  CHECK(overlay_caption(0.95) == "JI 95.0% DC 97.4%");
  CHECK(overlay_caption(0.969) == "JI 96.9% DC 98.4%");
  CHECK(overlay_caption(std::nullopt) == "JI n/a DC n/a");

  // A phantom-like pair with Jaccard exactly 0.95.
  BinaryMask gt(20, 20), pred(20, 20);
  for (int i = 0; i < 100; ++i) gt.bits[i] = 1;
  for (int i = 0; i < 95; ++i) pred.bits[i] = 1;
  CHECK(overlay_caption(metrics(confusion(pred, gt)).jaccard) == "JI 95.0% DC 97.4%");
}
