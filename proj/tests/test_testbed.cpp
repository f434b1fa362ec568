#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <map>

#include "helpers.hpp"
#include "spursever/difficulty.hpp"
#include "spursever/error.hpp"
#include "spursever/stats.hpp"
#include "spursever/testbed.hpp"

using namespace spursever;

namespace {

std::size_t l0_diff(std::span<const float> a, std::span<const float> b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += a[i] != b[i];
  return n;
}

bool same_bytes(std::span<const float> a, std::span<const float> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size_bytes()) == 0;
}

}  // namespace

TEST_SUITE("testbed") {

TEST_CASE("class sizes and ids") {
  BaseSpec s = testutil::small_spec(2, 500);
  const auto d = generate_base(s, Split::train, 3);
  CHECK(d.size() == 1000);
  CHECK(d.class_counts() == std::vector<std::size_t>{500, 500});
  CHECK(d.spurious_count() == 0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(d.sample(i).id == i);
    CHECK(d.sample(i).group_id == group_of(d.sample(i).label, false));
  }
  for (float v : d.raw_features()) CHECK((v >= 0.0f && v <= 1.0f));
}

TEST_CASE("point-mass noise makes each class constant") {
  BaseSpec s = testutil::small_spec(3, 5);
  s.noise = {0.0, 0.0, 1.0};
  const auto d = generate_base(s, Split::train, 9);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto c = d.sample(i).label;
    CHECK(same_bytes(d.features(i), d.features(c * 5)));
    CHECK(d.sample(i).core_noise == 0.0);
  }
  // Distinct classes still have distinct patterns.
  CHECK_FALSE(same_bytes(d.features(0), d.features(5)));
}

TEST_CASE("generation is deterministic per seed and split") {
  BaseSpec s = testutil::small_spec();
  const auto a = generate_base(s, Split::train, 5);
  const auto b = generate_base(s, Split::train, 5);
  CHECK(same_bytes(a.raw_features(), b.raw_features()));
  CHECK_FALSE(same_bytes(a.raw_features(), generate_base(s, Split::train, 6).raw_features()));
  CHECK_FALSE(same_bytes(a.raw_features(), generate_base(s, Split::test, 5).raw_features()));
}

TEST_CASE("noise spread shape") {
  NoiseSpread n{0.2, 1.0, 2.0};
  CHECK(n.sample(0.0) == doctest::Approx(0.2));
  CHECK(n.sample(0.5) == doctest::Approx(0.2 + 0.8 * 0.25));
  CHECK_THROWS_AS((NoiseSpread{0.5, 0.1, 1.0}.validate()), InputError);
}

TEST_CASE("degenerate shapes are rejected") {
  BaseSpec s = testutil::small_spec();
  s.grid.width = 0;
  CHECK_THROWS_AS(generate_base(s, Split::train, 0), InputError);
  s = testutil::small_spec();
  s.classes = 1;
  CHECK_THROWS_AS(generate_base(s, Split::train, 0), InputError);
}

TEST_CASE("normalization uses per-channel statistics") {
  BaseSpec s = testutil::small_spec(2, 30);
  s.grid.channels = 2;
  const auto d = generate_base(s, Split::train, 1);
  const auto z = d.normalized_features();
  const std::size_t plane = 64;
  for (std::size_t k = 0; k < 2; ++k) {
    double sum = 0, sq = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < d.size(); ++i)
      for (std::size_t j = 0; j < plane; ++j) {
        const double v = z[i * d.grid().size() + k * plane + j];
        sum += v;
        sq += v * v;
        ++n;
      }
    CHECK(sum / n == doctest::Approx(0.0).epsilon(1e-5));
    CHECK(sq / n == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("bar geometry") {
  BaseSpec s = testutil::small_spec(2, 10);
  s.grid = {32, 32, 3};
  const auto d = generate_base(s, Split::train, 2);
  for (std::size_t width : {1u, 3u, 5u}) {
    SpuriousSpec spec;
    spec.width = width;
    spec.selection = SelectionRule::random(4, 1);
    const auto out = inject_spurious(d, spec);
    CHECK(out.spurious_count() == 4);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto diff = l0_diff(d.features(i), out.features(i));
      if (out.sample(i).has_spurious) {
        CHECK(diff <= 32 * width);
        // Every bar pixel holds the injection value, on channel 0 only.
        const auto x = out.features(i);
        for (std::size_t y = 0; y < 32; ++y)
          for (std::size_t c = spec.first_column(d.grid()); c < spec.first_column(d.grid()) + width; ++c)
            CHECK(x[y * 32 + c] == 1.0f);
        CHECK(same_bytes(x.subspan(1024), d.features(i).subspan(1024)));
      } else {
        CHECK(diff == 0);
      }
      CHECK(out.sample(i).label == d.sample(i).label);
    }
  }
  // With a strictly sub-maximal image every bar pixel changes: exactly H*width.
  Dataset flat(GridShape{32, 32, 1}, 2, Split::train, 0);
  std::vector<float> half(1024, 0.5f);
  flat.add(Sample{0, 0, 0.0, false, 0}, half);
  flat.add(Sample{1, 1, 0.0, false, 2}, half);
  SpuriousSpec one;
  one.width = 1;
  const auto out = inject_spurious(flat, one);
  CHECK(l0_diff(flat.features(0), out.features(0)) == 32);
  CHECK(out.sample(0).group_id == group_of(0, true));
  CHECK(strength_width(1) == 1);
  CHECK(strength_width(2) == 3);
  CHECK(strength_width(3) == 5);
}

TEST_CASE("hardest 100 of a 5000-sample class is 2%") {
  BaseSpec s = testutil::small_spec(2, 5000);
  s.grid = {2, 2, 1};
  const auto d = generate_base(s, Split::train, 1);
  std::vector<double> scores;
  for (const auto& smp : d.samples()) scores.push_back(smp.core_noise);
  const auto table = testutil::table_from(d, scores);
  SpuriousSpec spec;
  spec.width = 1;
  spec.selection = SelectionRule::hardest(100);
  const auto out = inject_spurious(d, spec, &table);
  CHECK(out.spurious_count() == 100);
  CHECK(double(out.spurious_count()) / 5000 == doctest::Approx(0.02));
  // The flagged ones are the noisiest of class 0.
  double min_flagged = 1e9, max_clean = 0;
  for (const auto& smp : out.samples()) {
    if (smp.label != 0) continue;
    if (smp.has_spurious) min_flagged = std::min(min_flagged, smp.core_noise);
    else max_clean = std::max(max_clean, smp.core_noise);
  }
  CHECK(min_flagged >= max_clean);
}

TEST_CASE("injection guards and identity") {
  const auto d = generate_base(testutil::small_spec(2, 10), Split::train, 1);
  SpuriousSpec spec;
  spec.selection = SelectionRule::random(0, 3);
  const auto out = inject_spurious(d, spec);
  CHECK(same_bytes(out.raw_features(), d.raw_features()));
  CHECK(out.spurious_count() == 0);
  spec.selection = SelectionRule::random(11, 3);
  CHECK_THROWS_AS(inject_spurious(d, spec), InputError);
  spec.selection = SelectionRule::hardest(2);
  CHECK_THROWS_AS(inject_spurious(d, spec), InputError);  // no table
  spec.selection = SelectionRule::all_of_class();
  spec.width = 0;
  CHECK_THROWS_AS(inject_spurious(d, spec), InputError);
  spec.width = 3;
  spec.column = 6;  // 8-wide grid
  CHECK_THROWS_AS(inject_spurious(d, spec), InputError);
}

TEST_CASE("spurious test set") {
  BaseSpec s = testutil::small_spec(3, 1000);
  s.grid = {4, 4, 1};
  const auto test = generate_base(s, Split::test, 4);
  SpuriousSpec spec;
  spec.width = 1;
  const auto t = make_spurious_test_set(test, spec, 2);
  std::size_t flagged = 0;
  for (const auto& smp : t.injected.samples()) {
    flagged += smp.has_spurious;
    CHECK(smp.has_spurious == (smp.label == 2));
  }
  CHECK(flagged == 1000);
  CHECK(t.clean_complement.size() == 2000);
  for (std::size_t i = 0; i < t.clean_complement.size(); ++i) {
    const auto idx = *test.index_of(t.clean_complement.sample(i).id);
    CHECK(same_bytes(t.clean_complement.features(i), test.features(idx)));
  }
  const auto again = make_spurious_test_set(t.injected, spec, 2);
  CHECK(same_bytes(again.injected.raw_features(), t.injected.raw_features()));
  CHECK_THROWS_AS(make_spurious_test_set(test, spec, 0), InputError);
  CHECK_THROWS_AS(make_spurious_test_set(test, spec, 7), InputError);

  const auto eval = make_evaluation_set(test, spec, 2, 100000);
  CHECK(eval.size() == 5000);
  std::map<std::uint32_t, std::size_t> groups;
  for (const auto& smp : eval.samples()) ++groups[smp.group_id];
  CHECK(groups == std::map<std::uint32_t, std::size_t>{{0, 1000}, {1, 1000}, {2, 1000}, {4, 1000}, {5, 1000}});
}

TEST_CASE("selection rules") {
  auto d = testutil::tiny_dataset({0, 0, 0, 0}, {}, 2);
  const auto t = testutil::table_from(d, {0.9, 0.1, 0.5, 0.1});
  CHECK(select_samples(d, 0, SelectionRule::easiest(3), &t) == std::vector<std::uint64_t>{1, 3, 2});
  CHECK(select_samples(d, 0, SelectionRule::hardest(2), &t) == std::vector<std::uint64_t>{0, 2});
  CHECK(select_samples(d, 0, SelectionRule::window(1, 2), &t) == std::vector<std::uint64_t>{3, 2});
  auto all = select_samples(d, 0, SelectionRule::all_of_class(), nullptr);
  auto win = select_samples(d, 0, SelectionRule::window(0, 4), &t);
  std::sort(win.begin(), win.end());
  CHECK(win == all);
  CHECK(select_samples(d, 0, SelectionRule::random(3, 9), nullptr) ==
        select_samples(d, 0, SelectionRule::random(3, 9), nullptr));
  CHECK(select_samples(d, 0, SelectionRule::explicit_ids({2, 0}), nullptr) == std::vector<std::uint64_t>{2, 0});
  CHECK_THROWS_AS(select_samples(d, 0, SelectionRule::easiest(1), nullptr), InputError);
  CHECK_THROWS_AS(select_samples(d, 0, SelectionRule::easiest(5), &t), InputError);
  CHECK_THROWS_AS(select_samples(d, 0, SelectionRule::window(2, 3), &t), InputError);
  CHECK_THROWS_AS(select_samples(d, 0, SelectionRule::explicit_ids({7}), nullptr), InputError);
}

TEST_CASE("selection matches a brute-force sort") {
  auto d = testutil::tiny_dataset(std::vector<std::uint32_t>(40, 1), {}, 2);
  std::vector<double> scores;
  for (int i = 0; i < 40; ++i) scores.push_back(double((i * 7) % 5));  // many ties
  const auto t = testutil::table_from(d, scores);
  std::vector<std::pair<double, std::uint64_t>> oracle;
  for (std::uint64_t i = 0; i < 40; ++i) oracle.emplace_back(scores[i], i);
  std::sort(oracle.begin(), oracle.end());  // score asc, then id asc
  const auto easy = select_samples(d, 1, SelectionRule::easiest(40), &t);
  for (std::size_t i = 0; i < 40; ++i) CHECK(easy[i] == oracle[i].second);
  std::stable_sort(oracle.begin(), oracle.end(), [](auto& a, auto& b) { return a.first > b.first; });
  const auto hard = select_samples(d, 1, SelectionRule::hardest(40), &t);
  for (std::size_t i = 0; i < 40; ++i) CHECK(hard[i] == oracle[i].second);
}

TEST_CASE("selection rule text round-trips") {
  for (const auto& r : {SelectionRule::easiest(3), SelectionRule::hardest(100), SelectionRule::window(125, 100),
                        SelectionRule::random(7, 42), SelectionRule::all_of_class(),
                        SelectionRule::explicit_ids({4, 8, 15})}) {
    const auto back = SelectionRule::parse(r.describe());
    CHECK(back.describe() == r.describe());
  }
  CHECK_THROWS_AS(SelectionRule::parse("hardest"), InputError);
  CHECK_THROWS_AS(SelectionRule::parse("median:3"), InputError);
}

TEST_CASE("dataset directory round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "spursever_ds_test";
  std::filesystem::remove_all(dir);
  auto d = generate_base(testutil::small_spec(3, 7), Split::train, 8);
  SpuriousSpec spec;
  spec.width = 1;
  spec.selection = SelectionRule::random(3, 0);
  d = inject_spurious(d, spec);
  save_dataset(dir, d);
  const auto back = load_dataset(dir);
  CHECK(back.size() == d.size());
  CHECK(same_bytes(back.raw_features(), d.raw_features()));
  CHECK(back.norm().mean == d.norm().mean);
  CHECK(back.norm().stddev == d.norm().stddev);
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(back.sample(i).id == d.sample(i).id);
    CHECK(back.sample(i).core_noise == d.sample(i).core_noise);
    CHECK(back.sample(i).has_spurious == d.sample(i).has_spurious);
  }
  std::filesystem::resize_file(dir / "features.bin", 12);
  CHECK_THROWS(load_dataset(dir));
  std::filesystem::remove_all(dir);
}

TEST_CASE("dataset invariants") {
  Dataset d(GridShape{2, 2, 1}, 2, Split::train, 0);
  std::vector<float> x(4, 0.0f);
  d.add(Sample{5, 1, 0.0, false, 2}, x);
  CHECK_THROWS_AS(d.add(Sample{5, 0, 0.0, false, 0}, x), InputError);  // duplicate id
  CHECK_THROWS_AS(d.add(Sample{6, 0, 0.0, true, 0}, x), InputError);   // inconsistent group
  CHECK_THROWS_AS(d.add(Sample{7, 2, 0.0, false, 4}, x), InputError);  // label range
  const std::uint64_t unknown[] = {99};
  CHECK_THROWS_AS(d.without(unknown), InputError);
}

}
