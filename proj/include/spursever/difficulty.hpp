#pragma once

// EL2N difficulty: ||softmax(f(x)) - onehot(y)||_2 at an early snapshot.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "spursever/kernels.hpp"

namespace spursever {

class Dataset;
class Network;

struct DifficultyEntry {
  std::uint64_t id = 0;
  std::uint32_t label = 0;
  double score = 0.0;
  bool has_spurious = false;  ///< analysis only
  double core_noise = 0.0;    ///< analysis only
};

struct DifficultyTable {
  std::size_t epoch = 0;
  std::vector<DifficultyEntry> entries;  ///< ascending id

  std::size_t size() const { return entries.size(); }
  const DifficultyEntry* find(std::uint64_t id) const;
  /// Throws InputError for ids the table does not cover.
  double score_of(std::uint64_t id) const;
  /// Re-sorts entries by id and rejects duplicates.
  void canonicalize();
};

double el2n_score(std::span<const double> probs, std::uint32_t label);

/// Scores every sample of data with the frozen snapshot.
DifficultyTable score_dataset(const Network& snapshot, const Dataset& data, std::size_t epoch = 0,
                              kernels::Mode mode = kernels::Mode::reference);

/// Per-class id lists, hardest first; ties by ascending id. Indexed by class.
std::vector<std::vector<std::uint64_t>> rank_per_class(const DifficultyTable& table,
                                                       const Dataset& data);

/// Element-wise mean of tables covering the same ids.
DifficultyTable mean_of_tables(std::span<const DifficultyTable> tables);

/// CSV: id,class,score,has_spurious,core_noise
void save_table_csv(const std::filesystem::path& path, const DifficultyTable& table);
DifficultyTable load_table_csv(const std::filesystem::path& path);

}  // namespace spursever
