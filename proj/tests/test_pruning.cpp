#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "helpers.hpp"
#include "spursever/difficulty.hpp"
#include "spursever/error.hpp"
#include "spursever/pruning.hpp"

using namespace spursever;

namespace {

Dataset two_classes(std::size_t n0, std::size_t n1, std::size_t spurious0 = 0) {
  std::vector<std::uint32_t> labels;
  std::vector<bool> flags;
  for (std::size_t i = 0; i < n0; ++i) {
    labels.push_back(0);
    flags.push_back(i < spurious0);
  }
  for (std::size_t i = 0; i < n1; ++i) {
    labels.push_back(1);
    flags.push_back(false);
  }
  return testutil::tiny_dataset(labels, flags, 2);
}

std::vector<double> pseudo_scores(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::vector<double> v(n);
  // Coarse grid so ties occur.
  for (auto& x : v) x = double(eng() % 50) / 50.0;
  return v;
}

std::set<std::uint64_t> as_set(const std::vector<std::uint64_t>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST_SUITE("pruning") {

TEST_CASE("hardest per class counts") {
  const auto d = two_classes(500, 500);
  const auto t = testutil::table_from(d, pseudo_scores(1000, 1));
  const auto r = prune_hardest_per_class(d, t, 0.1);
  CHECK(r.removed.size() == 100);
  CHECK(r.data.size() == 900);
  CHECK(r.data.class_counts() == std::vector<std::size_t>{450, 450});
  const auto id = prune_hardest_per_class(d, t, 0.0);
  CHECK(id.removed.empty());
  CHECK(id.data.size() == d.size());
  CHECK_THROWS_AS(prune_hardest_per_class(d, t, 1.0), InputError);
  CHECK_THROWS_AS(prune_hardest_per_class(d, t, -0.1), InputError);
}

TEST_CASE("hardest per class matches a brute-force oracle") {
  const auto d = two_classes(37, 53);
  const auto scores = pseudo_scores(90, 2);
  const auto t = testutil::table_from(d, scores);
  for (double f : {0.02, 0.05, 0.1, 0.2, 0.5}) {
    std::set<std::uint64_t> oracle;
    for (std::uint32_t c = 0; c < 2; ++c) {
      std::vector<std::pair<double, std::uint64_t>> v;
      for (std::size_t i = 0; i < d.size(); ++i)
        if (d.sample(i).label == c) v.emplace_back(-scores[i], d.sample(i).id);
      std::sort(v.begin(), v.end());
      const auto k = static_cast<std::size_t>(std::floor(f * v.size()));
      for (std::size_t i = 0; i < k; ++i) oracle.insert(v[i].second);
    }
    const auto r = prune_hardest_per_class(d, t, f);
    CHECK(as_set(r.removed) == oracle);
    CHECK(r.data.size() + r.removed.size() == d.size());
    CHECK(r.removed == prune_hardest_per_class(d, t, f).removed);
  }
}

TEST_CASE("group hardest stays inside spurious groups") {
  const auto d = two_classes(300, 300, 100);
  const auto t = testutil::table_from(d, pseudo_scores(600, 3));
  const auto r = prune_group_hardest(d, t, 0.2);
  CHECK(r.removed.size() == 20);
  for (auto id : r.removed) CHECK(d.sample(*d.index_of(id)).has_spurious);
  // They are the 20 hardest flagged samples.
  std::vector<std::pair<double, std::uint64_t>> v;
  for (const auto& e : t.entries)
    if (e.has_spurious) v.emplace_back(-e.score, e.id);
  std::sort(v.begin(), v.end());
  std::set<std::uint64_t> oracle;
  for (std::size_t i = 0; i < 20; ++i) oracle.insert(v[i].second);
  CHECK(as_set(r.removed) == oracle);
  CHECK(prune_group_hardest(d, t, 0.0).removed.empty());
  const auto clean = two_classes(10, 10);
  CHECK_THROWS_AS(prune_group_hardest(clean, testutil::table_from(clean, pseudo_scores(20, 1)), 0.1), InputError);
}

TEST_CASE("selection pruning") {
  const auto d = two_classes(50, 50, 20);
  const auto t = testutil::table_from(d, pseudo_scores(100, 4));
  CHECK(prune_selection(d, SelectionRule::explicit_ids({}), nullptr).removed.empty());
  std::vector<std::uint64_t> pool;
  for (const auto& s : d.samples())
    if (s.has_spurious) pool.push_back(s.id);
  const auto hard = prune_selection(d, pool, SelectionRule::hardest(5), &t);
  CHECK(hard.removed.size() == 5);
  for (auto id : hard.removed) CHECK(d.sample(*d.index_of(id)).has_spurious);
  CHECK(hard.removed == select_from_pool(pool, SelectionRule::hardest(5), &t));
  const auto whole = prune_selection(d, pool, SelectionRule::easiest(pool.size()), &t);
  CHECK(whole.data.spurious_count() == 0);
  CHECK_THROWS_AS(prune_selection(d, pool, SelectionRule::easiest(21), &t), InputError);
  CHECK_THROWS_AS(prune_selection(d, SelectionRule::explicit_ids({1000}), nullptr), InputError);
}

TEST_CASE("class balance") {
  const auto bal = two_classes(20, 20);
  CHECK(apply_class_balance(bal, testutil::table_from(bal, pseudo_scores(40, 5))).removed.empty());
  const auto d = two_classes(800, 500);
  const auto scores = pseudo_scores(1300, 6);
  const auto t = testutil::table_from(d, scores);
  const auto r = apply_class_balance(d, t);
  CHECK(r.data.class_counts() == std::vector<std::size_t>{500, 500});
  CHECK(r.removed.size() == 300);
  const auto ranks = rank_per_class(t, d);
  CHECK(r.removed == std::vector<std::uint64_t>(ranks[0].begin(), ranks[0].begin() + 300));
}

TEST_CASE("random per class and the PruneSpec dispatcher") {
  const auto d = two_classes(41, 60);
  const auto a = prune_random_per_class(d, 0.1, 7);
  CHECK(a.data.class_counts() == std::vector<std::size_t>{37, 54});
  CHECK(a.removed == prune_random_per_class(d, 0.1, 7).removed);
  CHECK(a.removed != prune_random_per_class(d, 0.1, 8).removed);

  const auto t = testutil::table_from(d, pseudo_scores(101, 9));
  PruneSpec spec;
  spec.strategy = PruneSpec::Strategy::hardest_per_class;
  spec.fraction = 0.1;
  spec.class_balance = true;
  const auto r = apply_prune(d, spec, &t);
  CHECK(r.data.class_counts() == std::vector<std::size_t>{37, 37});
  CHECK_THROWS_AS(apply_prune(d, spec, nullptr), InputError);
  CHECK(strategy_from_string("group_hardest") == PruneSpec::Strategy::group_hardest);
  CHECK_THROWS_AS(strategy_from_string("magic"), InputError);
}

}
