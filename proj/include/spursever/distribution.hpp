#pragma once

// Where do bar-carrying samples sit in the difficulty spectrum?

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "spursever/kernels.hpp"
#include "spursever/nn.hpp"

namespace spursever {

class Dataset;
struct DifficultyTable;

struct QuartileReport {
  std::array<double, 4> shares{};      ///< share of all spurious samples per quartile
  std::array<std::size_t, 4> counts{}; ///< spurious samples per quartile
  std::array<std::size_t, 4> sizes{};  ///< samples per quartile
  std::size_t spurious_total = 0;
};

/// Samples sorted ascending by score (ties by id), cut into four equal-count
/// quartiles; the remainder goes to the later quartiles.
QuartileReport quartile_report(const DifficultyTable& table, const Dataset& data);

/// Sizes of the four quartiles for n samples.
std::array<std::size_t, 4> quartile_sizes(std::size_t n);

struct SettingVerdict {
  bool identifiable = false;
  double early_share = 0.0;  ///< Q1 + Q2
  double margin = 0.0;       ///< early_share - threshold
  double threshold = 0.7;
};

/// identifiable iff Q1 + Q2 >= threshold (boundary counts as identifiable).
SettingVerdict classify_setting(const QuartileReport& report, double threshold = 0.7);

void save_quartiles_csv(const std::filesystem::path& path, const QuartileReport& report,
                        const std::string& header_comment = {});

struct ProbeResult {
  std::size_t epoch = 0;
  double accuracy_spurious = 0.0;  ///< c1 samples with the bar
  double accuracy_clean = 0.0;     ///< c1 samples without it
  double gap = 0.0;                ///< spurious - clean
  std::size_t n_spurious = 0;
  std::size_t n_clean = 0;
};

/// Base recipe with weight decay multiplied by wd_multiplier; the probe epoch
/// defaults to the difficulty epoch.
TrainConfig probe_config(const TrainConfig& base, double wd_multiplier = 10.0);

/// Trains briefly and measures training accuracy on c1 split by the bar flag.
/// Flags are read only for this measurement.
ProbeResult identifiability_probe(const Dataset& data, const Architecture& arch,
                                  const TrainConfig& cfg, std::size_t probe_epoch,
                                  std::uint32_t c1, kernels::Mode mode = kernels::Mode::reference);

}  // namespace spursever
