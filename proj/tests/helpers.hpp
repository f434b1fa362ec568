#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "spursever/difficulty.hpp"
#include "spursever/nn.hpp"
#include "spursever/testbed.hpp"

namespace testutil {

inline std::vector<float> random_floats(std::size_t n, std::uint64_t seed, float lo = -1.0f,
                                        float hi = 1.0f) {
  std::mt19937_64 eng(seed);
  std::uniform_real_distribution<float> d(lo, hi);
  std::vector<float> v(n);
  for (auto& x : v) x = d(eng);
  return v;
}

inline std::vector<std::uint32_t> random_labels(std::size_t n, std::size_t classes, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::vector<std::uint32_t> v(n);
  for (auto& y : v) y = static_cast<std::uint32_t>(eng() % classes);
  return v;
}

/// Tiny dataset: 1-channel grid, given labels and flags, features from seed.
inline spursever::Dataset tiny_dataset(const std::vector<std::uint32_t>& labels,
                                       const std::vector<bool>& flags, std::size_t classes,
                                       std::uint64_t seed = 1) {
  using namespace spursever;
  GridShape g{4, 4, 1};
  Dataset d(g, classes, Split::train, seed);
  auto x = random_floats(labels.size() * g.size(), seed, 0.0f, 1.0f);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool f = i < flags.size() && flags[i];
    d.add(Sample{i, labels[i], 0.0, f, group_of(labels[i], f)},
          std::span<const float>(x.data() + i * g.size(), g.size()));
  }
  return d;
}

inline spursever::DifficultyTable table_from(const spursever::Dataset& d, const std::vector<double>& scores) {
  spursever::DifficultyTable t;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& s = d.sample(i);
    t.entries.push_back({s.id, s.label, scores[i], s.has_spurious, s.core_noise});
  }
  t.canonicalize();
  return t;
}

inline spursever::BaseSpec small_spec(std::size_t classes = 4, std::size_t n = 40) {
  spursever::BaseSpec s;
  s.classes = classes;
  s.n_per_class = n;
  s.grid = {8, 8, 1};
  s.noise = {0.0, 0.4, 1.0};
  return s;
}

}  // namespace testutil
