#pragma once

// Training-set pruning strategies. Fraction-to-count conversion uses floor.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "spursever/testbed.hpp"

namespace spursever {

struct PruneResult {
  Dataset data;
  std::vector<std::uint64_t> removed;  ///< in removal order
};

/// floor(f * n_c) hardest samples of every class c.
PruneResult prune_hardest_per_class(const Dataset& data, const DifficultyTable& table,
                                    double fraction);

/// floor(f * n_g) hardest samples of every (class, spurious) group that
/// carries the bar. Clean groups are never touched.
PruneResult prune_group_hardest(const Dataset& data, const DifficultyTable& table,
                                double fraction);

/// Removes exactly the ids a rule picks from pool.
PruneResult prune_selection(const Dataset& data, std::span<const std::uint64_t> pool,
                            const SelectionRule& rule, const DifficultyTable* table);
/// Same, with the whole dataset as pool.
PruneResult prune_selection(const Dataset& data, const SelectionRule& rule,
                            const DifficultyTable* table);

/// Baseline: floor(f * n_c) uniformly random samples per class.
PruneResult prune_random_per_class(const Dataset& data, double fraction, std::uint64_t seed);

/// Trims every class down to the smallest class count by dropping its hardest samples.
PruneResult apply_class_balance(const Dataset& data, const DifficultyTable& table);

struct PruneSpec {
  enum class Strategy { none, hardest_per_class, group_hardest, selection, random_per_class };

  Strategy strategy = Strategy::none;
  double fraction = 0.0;
  SelectionRule rule;
  std::uint64_t seed = 0;
  bool class_balance = false;

  void validate() const;
  bool needs_table() const;
};

std::string to_string(PruneSpec::Strategy s);
PruneSpec::Strategy strategy_from_string(std::string_view text);

/// Strategy followed by optional class balancing.
PruneResult apply_prune(const Dataset& data, const PruneSpec& spec, const DifficultyTable* table);

/// One id per line under an "id" header.
void save_removed_ids(const std::filesystem::path& path, std::span<const std::uint64_t> ids);

}  // namespace spursever
