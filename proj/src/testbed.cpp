#include "spursever/testbed.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

#include "spursever/difficulty.hpp"
#include "spursever/error.hpp"
#include "spursever/keyvalue.hpp"
#include "spursever/rng.hpp"

namespace spursever {

void GridShape::validate() const {
  if (height == 0 || width == 0 || channels == 0)
    throw InputError("grid shape must have positive height, width and channels");
}

std::string to_string(Split split) { return split == Split::train ? "train" : "test"; }

Split split_from_string(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "test") return Split::test;
  throw InputError("unknown split '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Dataset

Dataset::Dataset(GridShape grid, std::size_t classes, Split split, std::uint64_t seed)
    : grid_(grid), classes_(classes), split_(split), seed_(seed) {
  grid_.validate();
  if (classes_ < 2) throw InputError("a dataset needs at least 2 classes");
}

void Dataset::add(const Sample& sample, std::span<const float> x) {
  if (x.size() != grid_.size()) throw InputError("sample features do not match the grid shape");
  if (sample.label >= classes_) throw InputError("sample label out of range");
  if (sample.group_id != group_of(sample.label, sample.has_spurious))
    throw InputError("group id inconsistent with (label, has_spurious)");
  if (!index_.emplace(sample.id, samples_.size()).second)
    throw InputError("duplicate sample id " + std::to_string(sample.id));
  samples_.push_back(sample);
  features_.insert(features_.end(), x.begin(), x.end());
}

std::span<const float> Dataset::features(std::size_t index) const {
  return {features_.data() + index * grid_.size(), grid_.size()};
}

std::span<float> Dataset::mutable_features(std::size_t index) {
  return {features_.data() + index * grid_.size(), grid_.size()};
}

void Dataset::set_spurious(std::size_t index, bool flag) {
  auto& s = samples_.at(index);
  s.has_spurious = flag;
  s.group_id = group_of(s.label, flag);
}

void Dataset::set_norm(NormStats stats) {
  if (stats.mean.size() != grid_.channels || stats.stddev.size() != grid_.channels)
    throw InputError("normalization statistics do not match the channel count");
  for (double s : stats.stddev)
    if (!(s > 0.0)) throw InputError("normalization stddev must be positive");
  norm_ = std::move(stats);
}

NormStats Dataset::compute_norm() const {
  const std::size_t ch = grid_.channels, plane = grid_.height * grid_.width;
  NormStats st{std::vector<double>(ch, 0.0), std::vector<double>(ch, 1.0)};
  if (samples_.empty()) return st;
  for (std::size_t k = 0; k < ch; ++k) {
    double sum = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < samples_.size(); ++i) {
      const float* p = features_.data() + i * grid_.size() + k * plane;
      for (std::size_t j = 0; j < plane; ++j) {
        sum += p[j];
        sq += static_cast<double>(p[j]) * p[j];
      }
    }
    const double n = static_cast<double>(samples_.size() * plane);
    const double mean = sum / n;
    const double var = std::max(sq / n - mean * mean, 0.0);
    st.mean[k] = mean;
    // Guard against constant channels (noise-free data).
    st.stddev[k] = var > 1e-12 ? std::sqrt(var) : 1.0;
  }
  return st;
}

std::vector<float> Dataset::normalized_features() const {
  std::vector<float> out(features_.size());
  const NormStats st = norm_.mean.empty() ? NormStats{std::vector<double>(grid_.channels, 0.0),
                                                      std::vector<double>(grid_.channels, 1.0)}
                                          : norm_;
  const std::size_t plane = grid_.height * grid_.width;
  for (std::size_t i = 0; i < samples_.size(); ++i)
    for (std::size_t k = 0; k < grid_.channels; ++k) {
      const std::size_t base = i * grid_.size() + k * plane;
      const double m = st.mean[k], inv = 1.0 / st.stddev[k];
      for (std::size_t j = 0; j < plane; ++j)
        out[base + j] = static_cast<float>((features_[base + j] - m) * inv);
    }
  return out;
}

std::vector<std::uint32_t> Dataset::labels() const {
  std::vector<std::uint32_t> out(samples_.size());
  for (std::size_t i = 0; i < samples_.size(); ++i) out[i] = samples_[i].label;
  return out;
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> out(classes_, 0);
  for (const auto& s : samples_) ++out[s.label];
  return out;
}

std::vector<std::uint64_t> Dataset::ids() const {
  std::vector<std::uint64_t> out(samples_.size());
  for (std::size_t i = 0; i < samples_.size(); ++i) out[i] = samples_[i].id;
  return out;
}

std::vector<std::uint64_t> Dataset::ids_of_class(std::uint32_t c) const {
  std::vector<std::uint64_t> out;
  for (const auto& s : samples_)
    if (s.label == c) out.push_back(s.id);
  return out;
}

std::optional<std::size_t> Dataset::index_of(std::uint64_t id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Dataset::spurious_count() const {
  return static_cast<std::size_t>(
      std::count_if(samples_.begin(), samples_.end(), [](const Sample& s) { return s.has_spurious; }));
}

Dataset Dataset::without(std::span<const std::uint64_t> removed) const {
  std::vector<char> drop(samples_.size(), 0);
  for (auto id : removed) {
    auto idx = index_of(id);
    if (!idx) throw InputError("cannot remove unknown sample id " + std::to_string(id));
    drop[*idx] = 1;
  }
  Dataset out(grid_, classes_, split_, seed_);
  out.norm_ = norm_;
  for (std::size_t i = 0; i < samples_.size(); ++i)
    if (!drop[i]) out.add(samples_[i], features(i));
  return out;
}

// ---------------------------------------------------------------------------
// Generation

void NoiseSpread::validate() const {
  if (!(min >= 0.0) || !(max >= min)) throw InputError("noise spread needs 0 <= min <= max");
  if (!(gamma > 0.0)) throw InputError("noise spread gamma must be positive");
}

double NoiseSpread::sample(double u) const { return min + (max - min) * std::pow(u, gamma); }

void BaseSpec::validate() const {
  if (classes < 2) throw InputError("need at least 2 classes");
  if (n_per_class == 0) throw InputError("n_per_class must be positive");
  grid.validate();
  noise.validate();
  if (!(contrast >= 0.0 && contrast <= 0.5)) throw InputError("contrast must lie in [0, 0.5]");
}

std::vector<float> class_pattern(const BaseSpec& spec, std::uint32_t c) {
  const auto& g = spec.grid;
  std::vector<float> out(g.size());
  const double theta = std::numbers::pi * c / static_cast<double>(spec.classes);
  const double ct = std::cos(theta), st = std::sin(theta);
  for (std::size_t k = 0; k < g.channels; ++k) {
    const double phase = std::numbers::pi * static_cast<double>(k) / static_cast<double>(g.channels);
    for (std::size_t y = 0; y < g.height; ++y)
      for (std::size_t x = 0; x < g.width; ++x) {
        const double u = (static_cast<double>(x) * ct + static_cast<double>(y) * st) /
                         static_cast<double>(g.width);
        out[(k * g.height + y) * g.width + x] = static_cast<float>(
            0.5 + spec.contrast * std::cos(2.0 * std::numbers::pi * spec.frequency * u + phase));
      }
  }
  return out;
}

Dataset generate_base(const BaseSpec& spec, Split split, std::uint64_t seed) {
  spec.validate();
  Dataset data(spec.grid, spec.classes, split, seed);
  const std::string stream = "generate." + to_string(split);
  std::vector<float> x(spec.grid.size());
  for (std::uint32_t c = 0; c < spec.classes; ++c) {
    const auto pattern = class_pattern(spec, c);
    for (std::size_t k = 0; k < spec.n_per_class; ++k) {
      const std::uint64_t id = c * spec.n_per_class + k;
      // One engine per sample keeps generation independent of iteration order.
      auto eng = rng::engine(seed, stream, id);
      const double sigma = spec.noise.sample(rng::uniform01(eng));
      for (std::size_t j = 0; j < x.size(); ++j) {
        const double v = pattern[j] + (sigma > 0.0 ? sigma * rng::normal(eng) : 0.0);
        x[j] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
      data.add(Sample{id, c, sigma, false, group_of(c, false)}, x);
    }
  }
  data.set_norm(data.compute_norm());
  return data;
}

// ---------------------------------------------------------------------------
// Selection

SelectionRule SelectionRule::easiest(std::size_t k) { return {Kind::easiest, k, 0, 0, {}}; }
SelectionRule SelectionRule::hardest(std::size_t k) { return {Kind::hardest, k, 0, 0, {}}; }
SelectionRule SelectionRule::window(std::size_t start, std::size_t k) {
  return {Kind::window, k, start, 0, {}};
}
SelectionRule SelectionRule::random(std::size_t k, std::uint64_t seed) {
  return {Kind::random, k, 0, seed, {}};
}
SelectionRule SelectionRule::all_of_class() { return {Kind::all_of_class, 0, 0, 0, {}}; }
SelectionRule SelectionRule::explicit_ids(std::vector<std::uint64_t> ids) {
  return {Kind::explicit_ids, 0, 0, 0, std::move(ids)};
}

bool SelectionRule::needs_ranking() const {
  return kind == Kind::easiest || kind == Kind::hardest || kind == Kind::window;
}

std::string SelectionRule::describe() const {
  switch (kind) {
    case Kind::easiest: return "easiest:" + std::to_string(k);
    case Kind::hardest: return "hardest:" + std::to_string(k);
    case Kind::window: return "window:" + std::to_string(start) + ":" + std::to_string(k);
    case Kind::random: return "random:" + std::to_string(k) + ":" + std::to_string(seed);
    case Kind::all_of_class: return "all";
    case Kind::explicit_ids: {
      std::string out = "ids:";
      for (std::size_t i = 0; i < ids.size(); ++i) out += (i ? " " : "") + std::to_string(ids[i]);
      return out;
    }
  }
  return "all";
}

SelectionRule SelectionRule::parse(std::string_view text) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto colon = text.find(':', start);
    parts.push_back(text.substr(start, colon - start));
    if (colon == std::string_view::npos) break;
    start = colon + 1;
  }
  const auto head = parts[0];
  auto arity = [&](std::size_t n) {
    if (parts.size() != n + 1)
      throw InputError("selection rule '" + std::string(text) + "' needs " + std::to_string(n) +
                       " argument(s)");
  };
  if (head == "easiest") {
    arity(1);
    return easiest(parse_uint(parts[1], "easiest count"));
  }
  if (head == "hardest") {
    arity(1);
    return hardest(parse_uint(parts[1], "hardest count"));
  }
  if (head == "window") {
    arity(2);
    return window(parse_uint(parts[1], "window start"), parse_uint(parts[2], "window size"));
  }
  if (head == "random") {
    arity(2);
    return random(parse_uint(parts[1], "random count"), parse_uint(parts[2], "random seed"));
  }
  if (head == "all") {
    arity(0);
    return all_of_class();
  }
  if (head == "ids") {
    arity(1);
    std::vector<std::uint64_t> ids;
    std::size_t p = 0;
    const auto body = parts[1];
    while (p < body.size()) {
      const auto q = body.find(' ', p);
      const auto tok = body.substr(p, q - p);
      if (!tok.empty()) ids.push_back(parse_uint(tok, "explicit id"));
      if (q == std::string_view::npos) break;
      p = q + 1;
    }
    return explicit_ids(std::move(ids));
  }
  throw InputError("unknown selection rule '" + std::string(text) + "'");
}

std::vector<std::uint64_t> select_from_pool(std::span<const std::uint64_t> pool,
                                            const SelectionRule& rule,
                                            const DifficultyTable* table) {
  using Kind = SelectionRule::Kind;
  std::vector<std::uint64_t> sorted(pool.begin(), pool.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw InputError("selection pool contains duplicate ids");

  auto check_k = [&](std::size_t k) {
    if (k > sorted.size())
      throw InputError("selection of " + std::to_string(k) + " exceeds the pool of " +
                       std::to_string(sorted.size()));
  };

  switch (rule.kind) {
    case Kind::all_of_class:
      return sorted;
    case Kind::explicit_ids: {
      std::set<std::uint64_t> seen;
      for (auto id : rule.ids) {
        if (!std::binary_search(sorted.begin(), sorted.end(), id))
          throw InputError("explicit id " + std::to_string(id) + " is not in the selection pool");
        if (!seen.insert(id).second) throw InputError("explicit ids contain duplicates");
      }
      return rule.ids;
    }
    case Kind::random: {
      check_k(rule.k);
      auto eng = rng::engine(rule.seed, "select");
      rng::shuffle(sorted.begin(), sorted.end(), eng);
      sorted.resize(rule.k);
      return sorted;
    }
    case Kind::easiest:
    case Kind::hardest:
    case Kind::window:
      break;
  }

  if (!table) throw InputError("rule '" + rule.describe() + "' needs a difficulty table");
  std::vector<std::pair<double, std::uint64_t>> scored;
  scored.reserve(sorted.size());
  for (auto id : sorted) scored.emplace_back(table->score_of(id), id);

  std::size_t begin = 0, k = rule.k;
  if (rule.kind == Kind::hardest) {
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
  } else {
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    if (rule.kind == Kind::window) {
      begin = rule.start;
      if (begin > sorted.size() || k > sorted.size() - begin)
        throw InputError("window [" + std::to_string(begin) + ", " + std::to_string(begin + k) +
                         ") is outside the pool of " + std::to_string(sorted.size()));
    }
  }
  check_k(k);
  std::vector<std::uint64_t> out;
  out.reserve(k);
  for (std::size_t i = begin; i < begin + k; ++i) out.push_back(scored[i].second);
  return out;
}

std::vector<std::uint64_t> select_samples(const Dataset& data, std::uint32_t c,
                                          const SelectionRule& rule,
                                          const DifficultyTable* table) {
  if (c >= data.classes()) throw InputError("class " + std::to_string(c) + " is not in the dataset");
  const auto pool = data.ids_of_class(c);
  return select_from_pool(pool, rule, table);
}

// ---------------------------------------------------------------------------
// Spurious bar

std::size_t SpuriousSpec::first_column(const GridShape& grid) const {
  if (column) return *column;
  return grid.width / 2 - width / 2;
}

void SpuriousSpec::validate(const GridShape& grid, std::size_t classes) const {
  if (width == 0) throw InputError("bar width must be at least 1");
  if (width > grid.width) throw InputError("bar wider than the grid");
  if (channel >= grid.channels) throw InputError("bar channel out of range");
  if (first_column(grid) + width > grid.width) throw InputError("bar does not fit inside the grid");
  if (target_class >= classes) throw InputError("spurious target class out of range");
}

std::size_t strength_width(int preset) {
  switch (preset) {
    case 1: return 1;
    case 2: return 3;
    case 3: return 5;
    default: throw InputError("strength preset must be 1, 2 or 3");
  }
}

void paint_bar(std::span<float> image, const GridShape& grid, const SpuriousSpec& spec) {
  const std::size_t c0 = spec.first_column(grid);
  for (std::size_t y = 0; y < grid.height; ++y) {
    float* row = image.data() + (spec.channel * grid.height + y) * grid.width;
    std::fill(row + c0, row + c0 + spec.width, spec.value);
  }
}

Dataset inject_spurious(const Dataset& data, const SpuriousSpec& spec,
                        const DifficultyTable* table) {
  spec.validate(data.grid(), data.classes());
  const auto chosen = select_samples(data, spec.target_class, spec.selection, table);
  Dataset out = data;
  for (auto id : chosen) {
    const auto idx = *out.index_of(id);
    paint_bar(out.mutable_features(idx), out.grid(), spec);
    out.set_spurious(idx, true);
  }
  return out;
}

SpuriousTestSet make_spurious_test_set(const Dataset& test, const SpuriousSpec& spec,
                                       std::uint32_t victim_class) {
  spec.validate(test.grid(), test.classes());
  if (victim_class == spec.target_class)
    throw InputError("victim class must differ from the spurious target class");
  if (victim_class >= test.classes() || test.ids_of_class(victim_class).empty())
    throw InputError("victim class " + std::to_string(victim_class) + " has no test samples");
  SpuriousTestSet out{test, Dataset(test.grid(), test.classes(), test.split(), test.seed())};
  out.clean_complement.set_norm(test.norm());
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (test.sample(i).label == victim_class) {
      paint_bar(out.injected.mutable_features(i), test.grid(), spec);
      out.injected.set_spurious(i, true);
    } else {
      out.clean_complement.add(test.sample(i), test.features(i));
    }
  }
  return out;
}

Dataset make_evaluation_set(const Dataset& test, const SpuriousSpec& spec,
                            std::uint32_t victim_class, std::uint64_t id_offset) {
  const auto barred = make_spurious_test_set(test, spec, victim_class).injected;
  Dataset out(test.grid(), test.classes(), test.split(), test.seed());
  out.set_norm(test.norm());
  for (std::size_t i = 0; i < test.size(); ++i) out.add(test.sample(i), test.features(i));
  std::vector<float> x;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& s = test.sample(i);
    if (s.label == victim_class) {
      Sample copy = barred.sample(i);
      copy.id += id_offset;
      out.add(copy, barred.features(i));
    } else if (s.label == spec.target_class) {
      x.assign(test.features(i).begin(), test.features(i).end());
      paint_bar(x, test.grid(), spec);
      out.add(Sample{s.id + id_offset, s.label, s.core_noise, true, group_of(s.label, true)}, x);
    }
  }
  return out;
}

}  // namespace spursever
