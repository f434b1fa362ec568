#include "spursever/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "spursever/difficulty.hpp"
#include "spursever/error.hpp"
#include "spursever/rng.hpp"

namespace spursever {
namespace {

void check_fraction(double f) {
  if (!(f >= 0.0 && f < 1.0)) throw InputError("prune fraction must lie in [0, 1)");
}

std::size_t floor_count(double f, std::size_t n) {
  return static_cast<std::size_t>(std::floor(f * static_cast<double>(n)));
}

/// ids sorted hardest first, ties by ascending id.
std::vector<std::uint64_t> hardest_first(std::vector<std::uint64_t> ids, const DifficultyTable& table) {
  std::vector<std::pair<double, std::uint64_t>> v;
  v.reserve(ids.size());
  for (auto id : ids) v.emplace_back(table.score_of(id), id);
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  for (std::size_t i = 0; i < v.size(); ++i) ids[i] = v[i].second;
  return ids;
}

PruneResult finish(const Dataset& data, std::vector<std::uint64_t> removed) {
  return {data.without(removed), std::move(removed)};
}

}  // namespace

PruneResult prune_hardest_per_class(const Dataset& data, const DifficultyTable& table,
                                    double fraction) {
  check_fraction(fraction);
  const auto ranks = rank_per_class(table, data);
  std::vector<std::uint64_t> removed;
  for (const auto& ids : ranks) {
    const auto k = floor_count(fraction, ids.size());
    removed.insert(removed.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return finish(data, std::move(removed));
}

PruneResult prune_group_hardest(const Dataset& data, const DifficultyTable& table,
                                double fraction) {
  check_fraction(fraction);
  std::map<std::uint32_t, std::vector<std::uint64_t>> groups;
  for (const auto& s : data.samples())
    if (s.has_spurious) groups[s.group_id].push_back(s.id);
  if (groups.empty()) throw InputError("no spurious group present in any class");
  std::vector<std::uint64_t> removed;
  for (auto& [g, ids] : groups) {
    const auto ordered = hardest_first(std::move(ids), table);
    const auto k = floor_count(fraction, ordered.size());
    removed.insert(removed.end(), ordered.begin(), ordered.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return finish(data, std::move(removed));
}

PruneResult prune_selection(const Dataset& data, std::span<const std::uint64_t> pool,
                            const SelectionRule& rule, const DifficultyTable* table) {
  for (auto id : pool)
    if (!data.index_of(id)) throw InputError("pool id " + std::to_string(id) + " is not in the dataset");
  return finish(data, select_from_pool(pool, rule, table));
}

PruneResult prune_selection(const Dataset& data, const SelectionRule& rule,
                            const DifficultyTable* table) {
  const auto pool = data.ids();
  return prune_selection(data, pool, rule, table);
}

PruneResult prune_random_per_class(const Dataset& data, double fraction, std::uint64_t seed) {
  check_fraction(fraction);
  std::vector<std::uint64_t> removed;
  for (std::uint32_t c = 0; c < data.classes(); ++c) {
    auto ids = data.ids_of_class(c);
    auto eng = rng::engine(seed, "prune.random", c);
    rng::shuffle(ids.begin(), ids.end(), eng);
    ids.resize(floor_count(fraction, ids.size()));
    removed.insert(removed.end(), ids.begin(), ids.end());
  }
  return finish(data, std::move(removed));
}

PruneResult apply_class_balance(const Dataset& data, const DifficultyTable& table) {
  const auto counts = data.class_counts();
  const auto target = *std::min_element(counts.begin(), counts.end());
  const auto ranks = rank_per_class(table, data);
  std::vector<std::uint64_t> removed;
  for (const auto& ids : ranks) {
    const auto extra = ids.size() - target;
    removed.insert(removed.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(extra));
  }
  return finish(data, std::move(removed));
}

void PruneSpec::validate() const {
  if (strategy == Strategy::hardest_per_class || strategy == Strategy::group_hardest ||
      strategy == Strategy::random_per_class)
    check_fraction(fraction);
}

bool PruneSpec::needs_table() const {
  return class_balance || strategy == Strategy::hardest_per_class ||
         strategy == Strategy::group_hardest ||
         (strategy == Strategy::selection && rule.needs_ranking());
}

std::string to_string(PruneSpec::Strategy s) {
  switch (s) {
    case PruneSpec::Strategy::none: return "none";
    case PruneSpec::Strategy::hardest_per_class: return "hardest_per_class";
    case PruneSpec::Strategy::group_hardest: return "group_hardest";
    case PruneSpec::Strategy::selection: return "selection";
    case PruneSpec::Strategy::random_per_class: return "random_per_class";
  }
  return "none";
}

PruneSpec::Strategy strategy_from_string(std::string_view text) {
  for (auto s : {PruneSpec::Strategy::none, PruneSpec::Strategy::hardest_per_class,
                 PruneSpec::Strategy::group_hardest, PruneSpec::Strategy::selection,
                 PruneSpec::Strategy::random_per_class})
    if (to_string(s) == text) return s;
  throw InputError("unknown prune strategy '" + std::string(text) + "'");
}

PruneResult apply_prune(const Dataset& data, const PruneSpec& spec, const DifficultyTable* table) {
  spec.validate();
  if (spec.needs_table() && !table) throw InputError("prune strategy needs a difficulty table");
  PruneResult r;
  switch (spec.strategy) {
    case PruneSpec::Strategy::none: r = {data, {}}; break;
    case PruneSpec::Strategy::hardest_per_class: r = prune_hardest_per_class(data, *table, spec.fraction); break;
    case PruneSpec::Strategy::group_hardest: r = prune_group_hardest(data, *table, spec.fraction); break;
    case PruneSpec::Strategy::selection: r = prune_selection(data, spec.rule, table); break;
    case PruneSpec::Strategy::random_per_class: r = prune_random_per_class(data, spec.fraction, spec.seed); break;
  }
  if (spec.class_balance) {
    auto balanced = apply_class_balance(r.data, *table);
    r.data = std::move(balanced.data);
    r.removed.insert(r.removed.end(), balanced.removed.begin(), balanced.removed.end());
  }
  return r;
}

void save_removed_ids(const std::filesystem::path& path, std::span<const std::uint64_t> ids) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "id\n";
  for (auto id : ids) out << id << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace spursever
