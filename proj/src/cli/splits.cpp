#include <algorithm>
#include <charconv>
#include <numeric>

#include "blastoseg/cli.hpp"

namespace blastoseg::cli {
namespace {

std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string require_meta(const numerics::Checkpoint& ck, const std::string& key) {
  const auto v = ck.meta(key);
  if (!v) throw CheckpointError("checkpoint has no '" + key + "' entry");
  return *v;
}

std::vector<std::size_t> pick(const std::vector<std::size_t>& pool, const std::vector<std::size_t>& idx) {
  std::vector<std::size_t> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(pool[i]);
  return out;
}

data::IndexSplit split_pool(const std::vector<data::SamplePair>& pairs,
                            const std::vector<std::size_t>& pool, double ratio, bool grouped,
                            std::uint64_t seed) {
  if (!grouped) return data::split_indices(pool.size(), ratio, seed);
  std::vector<std::string> groups;
  for (auto i : pool) groups.push_back(pairs[i].source_id);
  return data::split_indices_grouped(groups, ratio, seed);
}

}  // namespace

void SplitSettings::validate() const {
  if (subset < 0) throw ConfigurationError("subset must be >= 0");
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw ConfigurationError("split_ratio must lie in (0, 1)");
  if (!(val_ratio > 0.0 && val_ratio < 1.0)) throw ConfigurationError("val_ratio must lie in (0, 1)");
}

void SplitSettings::to_meta(numerics::Checkpoint& ck) const {
  ck.set_meta("split_subset", std::to_string(subset));
  ck.set_meta("split_ratio", num(split_ratio));
  ck.set_meta("split_val_ratio", num(val_ratio));
  ck.set_meta("split_grouped", grouped ? "1" : "0");
  ck.set_meta("split_seed", std::to_string(seed));
}

SplitSettings SplitSettings::from_meta(const numerics::Checkpoint& ck) {
  SplitSettings s;
  try {
    s.subset = std::stoi(require_meta(ck, "split_subset"));
    s.split_ratio = std::stod(require_meta(ck, "split_ratio"));
    s.val_ratio = std::stod(require_meta(ck, "split_val_ratio"));
    s.grouped = require_meta(ck, "split_grouped") == "1";
    s.seed = std::stoull(require_meta(ck, "split_seed"));
  } catch (const std::logic_error&) {
    throw CheckpointError("checkpoint split metadata is malformed");
  }
  return s;
}

DataSplits make_splits(const std::vector<data::SamplePair>& pairs, const SplitSettings& settings) {
  settings.validate();
  if (pairs.empty()) throw ConfigurationError("dataset is empty");
  std::vector<std::size_t> pool(pairs.size());
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  if (settings.subset > 0) {
    if (static_cast<std::size_t>(settings.subset) > pairs.size()) {
      throw ConfigurationError("subset of " + std::to_string(settings.subset) + " exceeds the " +
                               std::to_string(pairs.size()) + " available pairs");
    }
    auto order = training::epoch_order(pairs.size(), derive_seed(settings.seed, hash_name("subset")), 0);
    order.resize(static_cast<std::size_t>(settings.subset));
    std::sort(order.begin(), order.end());
    pool = std::move(order);
  }
  const auto outer = split_pool(pairs, pool, settings.split_ratio, settings.grouped,
                                derive_seed(settings.seed, hash_name("test")));
  const auto fit_pool = pick(pool, outer.train);
  const auto inner = split_pool(pairs, fit_pool, 1.0 - settings.val_ratio, settings.grouped,
                                derive_seed(settings.seed, hash_name("val")));
  DataSplits s;
  s.train_index = pick(fit_pool, inner.train);
  s.val_index = pick(fit_pool, inner.test);
  s.test_index = pick(pool, outer.test);
  for (auto i : s.train_index) s.train.push_back(pairs[i]);
  for (auto i : s.val_index) s.val.push_back(pairs[i]);
  for (auto i : s.test_index) s.test.push_back(pairs[i]);
  return s;
}

std::string DataSplits::to_csv(const std::vector<data::SamplePair>& pairs) const {
  std::string out = "index,role,source_id,frame\n";
  auto emit = [&](const std::vector<std::size_t>& idx, const char* role) {
    for (auto i : idx) {
      out += std::to_string(i) + ',' + role + ',' + pairs[i].source_id + ',' +
             std::to_string(pairs[i].frame_index) + '\n';
    }
  };
  emit(train_index, "train");
  emit(val_index, "val");
  emit(test_index, "test");
  return out;
}

}  // namespace blastoseg::cli
