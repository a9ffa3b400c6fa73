#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "blastoseg/data.hpp"

namespace blastoseg::data {
namespace {

void check_ratio(double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigurationError("split ratio must lie in (0, 1)");
}

template <typename T>
void seeded_shuffle(std::vector<T>& v, std::uint64_t seed) {
  std::mt19937_64 engine(seed);
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform01(engine) * static_cast<double>(i));
    std::swap(v[i - 1], v[std::min(j, i - 1)]);
  }
}

}  // namespace

IndexSplit split_indices(std::size_t count, double ratio, std::uint64_t seed) {
  check_ratio(ratio);
  if (count == 0) throw ConfigurationError("cannot split an empty dataset");
  if (count < 2) throw ConfigurationError("splitting needs at least two samples");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  seeded_shuffle(order, seed);
  const auto n_train = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(count) + 1e-9));
  IndexSplit s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return s;
}

IndexSplit split_indices_grouped(const std::vector<std::string>& groups, double ratio,
                                 std::uint64_t seed) {
  check_ratio(ratio);
  if (groups.size() < 2) throw ConfigurationError("splitting needs at least two samples");
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < groups.size(); ++i) members[groups[i]].push_back(i);
  if (members.size() < 2) throw ConfigurationError("grouped split needs at least two groups");
  std::vector<std::string> names;
  for (const auto& [name, _] : members) names.push_back(name);
  seeded_shuffle(names, seed);
  const auto quota = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(groups.size()) + 1e-9));
  IndexSplit s;
  bool train_full = false;
  for (std::size_t g = 0; g < names.size(); ++g) {
    const auto& idx = members[names[g]];
    const bool last_group = g + 1 == names.size();
    if (!train_full && s.train.size() + idx.size() <= quota && !(last_group && s.test.empty())) {
      s.train.insert(s.train.end(), idx.begin(), idx.end());
    } else {
      train_full = true;
      s.test.insert(s.test.end(), idx.begin(), idx.end());
    }
  }
  if (s.train.empty()) {
    // Quota smaller than the first group: give train the first group anyway.
    const auto& idx = members[names[0]];
    s.train = idx;
    s.test.erase(std::remove_if(s.test.begin(), s.test.end(),
                                [&](std::size_t i) { return groups[i] == names[0]; }),
                 s.test.end());
  }
  return s;
}

}  // namespace blastoseg::data
