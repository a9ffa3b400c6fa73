#include <cmath>

#include "blastoseg/evaluation.hpp"

namespace blastoseg::evaluation {
namespace {

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

const char* to_string(Scope scope) {
  switch (scope) {
    case Scope::per_image: return "per_image";
    case Scope::micro_aggregate: return "micro";
    case Scope::macro_average: return "macro";
  }
  return "?";
}

data::BinaryMask binarize(const data::Raster& probabilities, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigurationError("threshold must lie in (0, 1)");
  data::BinaryMask m(probabilities.width, probabilities.height);
  for (std::size_t i = 0; i < m.bits.size(); ++i) {
    m.bits[i] = static_cast<double>(probabilities.pixels[i]) >= threshold ? 1 : 0;
  }
  return m;
}

MetricsCounts confusion(const data::BinaryMask& pred, const data::BinaryMask& gt) {
  if (pred.width != gt.width) throw DimensionError("w", "prediction and truth widths differ");
  if (pred.height != gt.height) throw DimensionError("h", "prediction and truth heights differ");
  MetricsCounts c;
  for (std::size_t i = 0; i < pred.bits.size(); ++i) {
    const bool p = pred.bits[i] != 0, g = gt.bits[i] != 0;
    if (p && g) ++c.tp;
    else if (!p && !g) ++c.tn;
    else if (p) ++c.fp;
    else ++c.fn;
  }
  return c;
}

MetricsReport metrics(const MetricsCounts& c, Scope scope) {
  if (c.total() == 0) throw ValidationError("metrics of all-zero counts");
  MetricsReport r;
  r.scope = scope;
  r.accuracy = ratio(c.tp + c.tn, c.total());
  r.precision = ratio(c.tp, c.tp + c.fp);
  r.recall = ratio(c.tp, c.tp + c.fn);
  r.dice = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  r.jaccard = ratio(c.tp, c.tp + c.fp + c.fn);
  return r;
}

MetricsReport macro_average(std::span<const MetricsReport> reports) {
  if (reports.empty()) throw ConfigurationError("macro average of no reports");
  MetricsReport out;
  out.scope = Scope::macro_average;
  auto field = [&](int k, std::optional<double> MetricsReport::*member) {
    double sum = 0.0;
    int n = 0;
    for (const auto& r : reports) {
      if ((r.*member).has_value()) {
        sum += *(r.*member);
        ++n;
      } else {
        ++out.skipped[static_cast<std::size_t>(k)];
      }
    }
    if (n > 0) out.*member = sum / n;
  };
  field(0, &MetricsReport::accuracy);
  field(1, &MetricsReport::precision);
  field(2, &MetricsReport::recall);
  field(3, &MetricsReport::dice);
  field(4, &MetricsReport::jaccard);
  return out;
}

double dice_from_jaccard(double jaccard) { return 2.0 * jaccard / (jaccard + 1.0); }

const char* to_string(Category category) {
  switch (category) {
    case Category::best: return "best";
    case Category::better: return "better";
    case Category::fair: return "fair";
    case Category::below_fair: return "below_fair";
  }
  return "?";
}

Category categorize(double jaccard) {
  if (!(jaccard >= 0.0 && jaccard <= 1.0)) throw ValidationError("jaccard must lie in [0, 1]");
  if (jaccard > 0.97) return Category::best;
  if (jaccard >= 0.95) return Category::better;
  if (jaccard >= 0.90) return Category::fair;
  return Category::below_fair;
}

}  // namespace blastoseg::evaluation
