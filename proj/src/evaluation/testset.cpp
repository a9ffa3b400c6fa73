#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "blastoseg/parallel.hpp"
#include "blastoseg/training.hpp"
#include "blastoseg/evaluation.hpp"

namespace blastoseg::evaluation {
namespace {

std::string fmt(std::optional<double> v) {
  if (!v) return "undefined";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", *v);
  return buf;
}

std::string fmt(double v) { return fmt(std::optional<double>(v)); }

std::string metric_columns(const MetricsReport& r) {
  return fmt(r.accuracy) + ',' + fmt(r.precision) + ',' + fmt(r.recall) + ',' + fmt(r.dice) + ',' +
         fmt(r.jaccard);
}

std::string count_columns(const MetricsCounts& c) {
  return std::to_string(c.tp) + ',' + std::to_string(c.tn) + ',' + std::to_string(c.fp) + ',' +
         std::to_string(c.fn);
}

}  // namespace

Predictor model_predictor(const models::SegmentationModel<float>& model) {
  return [&model](const Tensor<float>& batch) { return model.predict(batch); };
}

Predictor ensemble_predictor(const models::EnsembleSpec<float>& spec) {
  return [&spec](const Tensor<float>& batch) { return models::ensemble_predict(spec, batch); };
}

std::vector<data::Raster> predict_probabilities(const Predictor& predict,
                                                std::span<const data::SamplePair> pairs,
                                                int height, int width, int batch_size) {
  if (batch_size < 1) throw ConfigurationError("batch_size must be >= 1");
  std::vector<data::Raster> out(pairs.size());
  std::vector<std::size_t> all(pairs.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto bs = static_cast<std::size_t>(batch_size);
  for (std::size_t start = 0; start < pairs.size(); start += bs) {
    const std::size_t count = std::min(pairs.size() - start, bs);
    const auto batch = training::assemble_batch(pairs, std::span(all).subspan(start, count), height,
                                                width, std::nullopt);
    const Tensor<float> prob = predict(batch.images);
    if (prob.shape() != batch.images.shape()) {
      throw DimensionError("c", "predictor returned " + prob.shape().str() + " for " +
                                    batch.images.shape().str());
    }
    parallel_for(static_cast<int>(count), [&](int k) {
      data::Raster r(width, height);
      std::copy(prob.sample(k), prob.sample(k) + r.pixels.size(), r.pixels.begin());
      const auto& native = pairs[start + static_cast<std::size_t>(k)].image;
      out[start + static_cast<std::size_t>(k)] = data::resize(r, native.width, native.height);
    });
  }
  return out;
}

double TestsetReport::category_fraction(Category c) const {
  const int total = std::accumulate(histogram.begin(), histogram.end(), 0);
  if (total == 0) return 0.0;
  return static_cast<double>(histogram[static_cast<std::size_t>(c)]) / total;
}

std::string TestsetReport::to_csv() const {
  std::string out =
      "source_id,frame,threshold,tp,tn,fp,fn,accuracy,precision,recall,dice,jaccard,category\n";
  for (const auto& im : images) {
    out += im.source_id + ',' + std::to_string(im.frame_index) + ',' + fmt(threshold) + ',' +
           count_columns(im.counts) + ',' + metric_columns(im.report) + ',' +
           (im.category ? to_string(*im.category) : "undefined") + '\n';
  }
  out += "\nscope,threshold,tp,tn,fp,fn,accuracy,precision,recall,dice,jaccard,skipped\n";
  out += std::string("micro,") + fmt(threshold) + ',' + count_columns(total) + ',' +
         metric_columns(micro) + ",0\n";
  const int skipped = *std::max_element(macro.skipped.begin(), macro.skipped.end());
  out += std::string("macro,") + fmt(threshold) + ",,,,," + metric_columns(macro) + ',' +
         std::to_string(skipped) + '\n';
  out += "\ncategory,count,fraction\n";
  for (Category c : {Category::best, Category::better, Category::fair, Category::below_fair}) {
    out += std::string(to_string(c)) + ',' + std::to_string(histogram[static_cast<std::size_t>(c)]) +
           ',' + fmt(category_fraction(c)) + '\n';
  }
  return out;
}

void TestsetReport::write_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  os << to_csv();
  if (!os) throw IoError("cannot write report '" + path.string() + "'");
}

TestsetReport evaluate_probabilities(std::span<const data::Raster> probabilities,
                                     std::span<const data::SamplePair> pairs, double threshold) {
  if (pairs.empty()) throw ConfigurationError("test set is empty");
  if (probabilities.size() != pairs.size()) {
    throw DimensionError("n", "probability maps and pairs differ in count");
  }
  TestsetReport rep;
  rep.threshold = threshold;
  rep.images.resize(pairs.size());
  parallel_for(static_cast<int>(pairs.size()), [&](int i) {
    const auto k = static_cast<std::size_t>(i);
    auto& im = rep.images[k];
    im.source_id = pairs[k].source_id;
    im.frame_index = pairs[k].frame_index;
    im.counts = confusion(binarize(probabilities[k], threshold), pairs[k].mask);
    im.report = metrics(im.counts);
    if (im.report.jaccard) im.category = categorize(*im.report.jaccard);
  });
  std::vector<MetricsReport> reports;
  for (const auto& im : rep.images) {
    rep.total += im.counts;
    reports.push_back(im.report);
    if (im.category) ++rep.histogram[static_cast<std::size_t>(*im.category)];
  }
  rep.micro = metrics(rep.total, Scope::micro_aggregate);
  rep.macro = macro_average(reports);
  return rep;
}

TestsetReport evaluate_testset(const Predictor& predict, std::span<const data::SamplePair> test_set,
                               double threshold, int height, int width, int batch_size) {
  if (test_set.empty()) throw ConfigurationError("test set is empty");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigurationError("threshold must lie in (0, 1)");
  const auto probs = predict_probabilities(predict, test_set, height, width, batch_size);
  return evaluate_probabilities(probs, test_set, threshold);
}

std::vector<double> default_threshold_grid() {
  std::vector<double> g;
  for (int k = 1; k <= 9; ++k) g.push_back(k / 10.0);
  return g;
}

SweepResult threshold_sweep(std::span<const data::Raster> probabilities,
                            std::span<const data::SamplePair> pairs, std::span<const double> grid) {
  if (grid.empty()) throw ConfigurationError("threshold grid is empty");
  SweepResult s;
  double best = -1.0;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double t : grid) {
    const auto rep = evaluate_probabilities(probabilities, pairs, t);
    s.rows.push_back({t, rep.micro.jaccard});
    const double j = rep.micro.jaccard.value_or(0.0);
    if (j > best) {
      best = j;
      s.best_threshold = t;
    }
    if (t >= 0.4 - 1e-9 && t <= 0.6 + 1e-9) {
      lo = std::min(lo, j);
      hi = std::max(hi, j);
    }
  }
  s.spread_mid = hi >= lo ? hi - lo : 0.0;
  s.insensitive = s.spread_mid < 0.01;
  return s;
}

SweepResult threshold_sweep(const Predictor& predict, std::span<const data::SamplePair> val_set,
                            int height, int width, std::span<const double> grid) {
  if (val_set.empty()) throw ConfigurationError("validation set is empty");
  const auto probs = predict_probabilities(predict, val_set, height, width);
  return threshold_sweep(probs, val_set, grid);
}

std::string SweepResult::to_csv() const {
  std::string out = "threshold,micro_jaccard\n";
  for (const auto& r : rows) out += fmt(r.threshold) + ',' + fmt(r.micro_jaccard) + '\n';
  out += "\nbest_threshold," + fmt(best_threshold) + '\n';
  out += "spread_0.4_0.6," + fmt(spread_mid) + '\n';
  out += std::string("insensitive,") + (insensitive ? "true" : "false") + '\n';
  return out;
}

}  // namespace blastoseg::evaluation
