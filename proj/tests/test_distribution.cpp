#include <doctest.h>

#include <algorithm>
#include <random>

#include "helpers.hpp"
#include "spursever/distribution.hpp"
#include "spursever/error.hpp"

using namespace spursever;

namespace {

// n samples in one class, scores = id, flags from a predicate.
template <class F>
std::pair<Dataset, DifficultyTable> ranked(std::size_t n, F flagged) {
  std::vector<std::uint32_t> labels(n, 0);
  std::vector<bool> flags(n);
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    flags[i] = flagged(i);
    scores[i] = double(i);
  }
  auto d = testutil::tiny_dataset(labels, flags, 2);
  auto t = testutil::table_from(d, scores);
  return {std::move(d), std::move(t)};
}

}  // namespace

TEST_SUITE("distribution") {

TEST_CASE("quartile sizes put the remainder late") {
  CHECK(quartile_sizes(8) == std::array<std::size_t, 4>{2, 2, 2, 2});
  CHECK(quartile_sizes(10) == std::array<std::size_t, 4>{2, 2, 3, 3});
  CHECK(quartile_sizes(3) == std::array<std::size_t, 4>{0, 1, 1, 1});
}

TEST_CASE("uniformly spread flags give quarter shares") {
  auto [d, t] = ranked(400, [](std::size_t i) { return i % 4 == 1; });
  const auto r = quartile_report(t, d);
  for (double s : r.shares) CHECK(s == 0.25);
  CHECK(r.spurious_total == 100);
}

TEST_CASE("all flags among the easiest") {
  auto [d, t] = ranked(400, [](std::size_t i) { return i < 60; });
  const auto r = quartile_report(t, d);
  CHECK(r.shares == std::array<double, 4>{1.0, 0.0, 0.0, 0.0});
  CHECK(classify_setting(r).identifiable);
  auto [d2, t2] = ranked(400, [](std::size_t i) { return i >= 390; });
  const auto v = classify_setting(quartile_report(t2, d2));
  CHECK_FALSE(v.identifiable);
  CHECK(v.early_share == 0.0);
}

TEST_CASE("classification examples and boundary") {
  QuartileReport r;
  r.shares = {0.5, 0.2, 0.2, 0.1};
  const auto v = classify_setting(r, 0.7);
  CHECK(v.identifiable);  // 0.7 counts
  CHECK(v.early_share == doctest::Approx(0.7));
  r.shares = {0.3, 0.3, 0.2, 0.2};
  CHECK_FALSE(classify_setting(r).identifiable);
  r.shares = {0.5, 0.5, 0.0, 0.0};
  CHECK(classify_setting(r, 1.0).identifiable);
  r.shares = {0.25, 0.25, 0.25, 0.25};
  CHECK(classify_setting(r, 0.5).margin == 0.0);
}

TEST_CASE("moving a flag to an easier slot never lowers the early share") {
  std::mt19937_64 eng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<bool> f(200);
    for (std::size_t i = 0; i < 200; ++i) f[i] = eng() % 5 == 0;
    f[199] = true;
    f[0] = false;
    auto [d, t] = ranked(200, [&](std::size_t i) { return bool(f[i]); });
    const double before = classify_setting(quartile_report(t, d)).early_share;
    f[199] = false;
    f[0] = true;
    auto [d2, t2] = ranked(200, [&](std::size_t i) { return bool(f[i]); });
    CHECK(classify_setting(quartile_report(t2, d2)).early_share >= before);
  }
}

TEST_CASE("report does not depend on sample order") {
  auto [d, t] = ranked(97, [](std::size_t i) { return i % 3 == 0; });
  Dataset rev(d.grid(), d.classes(), Split::train, 0);
  for (std::size_t i = d.size(); i-- > 0;) rev.add(d.sample(i), d.features(i));
  const auto a = quartile_report(t, d);
  const auto b = quartile_report(t, rev);
  CHECK(a.counts == b.counts);
  CHECK(a.sizes == b.sizes);
}

TEST_CASE("no spurious samples is an error") {
  auto [d, t] = ranked(20, [](std::size_t) { return false; });
  CHECK_THROWS_AS(quartile_report(t, d), InputError);
}

TEST_CASE("probe config scales weight decay only") {
  TrainConfig base;
  base.weight_decay = 5e-4;
  const auto p = probe_config(base, 10.0);
  CHECK(p.weight_decay == doctest::Approx(5e-3));
  CHECK(p.lr_initial == base.lr_initial);
  CHECK(p.epochs == base.epochs);
}

TEST_CASE("probe at epoch zero reads the initial network") {
  const auto d = generate_base(testutil::small_spec(3, 20), Split::train, 2);
  Architecture a;
  a.input_dim = d.grid().size();
  a.hidden = {8};
  a.classes = 3;
  TrainConfig c;
  c.epochs = 3;
  c.lr_milestones = {};
  c.difficulty_epoch = 1;
  c.seed = 4;
  const auto r = identifiability_probe(d, a, c, 0, 1);
  const auto pred = predict(Network::initialize(a, 4), d.normalized_features(), d.size(),
                            kernels::Mode::reference);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < d.size(); ++i) hits += d.sample(i).label == 1 && pred[i] == 1;
  CHECK(r.n_clean == 20);
  CHECK(r.n_spurious == 0);
  CHECK(r.accuracy_clean == doctest::Approx(double(hits) / 20));
  CHECK_THROWS_AS(identifiability_probe(d, a, c, 1, 3), InputError);
}

TEST_CASE("probe training ignores the flags") {
  const auto d = generate_base(testutil::small_spec(2, 30), Split::train, 3);
  Architecture a;
  a.input_dim = d.grid().size();
  a.hidden = {8};
  a.classes = 2;
  TrainConfig c;
  c.epochs = 4;
  c.lr_milestones = {};
  c.difficulty_epoch = 2;
  // Same pixels, two different flag assignments on class 1.
  Dataset f1 = d, f2 = d;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.sample(i).label != 1) continue;
    f1.set_spurious(i, i % 2 == 0);
    f2.set_spurious(i, i % 3 == 0);
  }
  const auto r1 = identifiability_probe(f1, a, c, 2, 1);
  const auto r2 = identifiability_probe(f2, a, c, 2, 1);
  const double h1 = r1.accuracy_spurious * r1.n_spurious + r1.accuracy_clean * r1.n_clean;
  const double h2 = r2.accuracy_spurious * r2.n_spurious + r2.accuracy_clean * r2.n_clean;
  CHECK(std::lround(h1) == std::lround(h2));
  CHECK(r1.n_spurious + r1.n_clean == 30);
}

}
