#pragma once

// End-to-end suites: generate, inject, train, score, prune, retrain, evaluate.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "spursever/difficulty.hpp"
#include "spursever/distribution.hpp"
#include "spursever/evaluation.hpp"
#include "spursever/keyvalue.hpp"
#include "spursever/nn.hpp"
#include "spursever/pruning.hpp"
#include "spursever/testbed.hpp"

namespace spursever {

struct ExperimentConfig {
  BaseSpec base;
  std::size_t test_per_class = 200;
  SpuriousSpec spurious;
  std::uint32_t victim_class = 1;
  std::vector<std::size_t> hidden{128, 64};
  TrainConfig train;
  PruneSpec prune;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<std::string> suites{"pipeline"};
  kernels::Mode mode = kernels::fastest_mode();

  std::size_t fig3_k = 100;
  std::size_t scan_k = 100;
  std::size_t scan_stride = 0;  ///< 0 = a quarter of the class
  double exclusion_hardest = 0.10;
  double exclusion_easiest = 0.97;
  std::vector<double> blind_fractions{0.02, 0.05, 0.10, 0.20};
  double probe_wd_multiplier = 10.0;
  std::optional<std::size_t> probe_epoch;  ///< default: train.difficulty_epoch
  double identifiable_threshold = 0.7;
  bool save_datasets = true;

  /// Unknown keys are rejected so typos do not silently fall back to defaults.
  static ExperimentConfig from_keyvalue(const KeyValue& kv);
  /// Every resolved setting, canonical order.
  KeyValue to_keyvalue() const;
  /// 16 hex digits of FNV-1a over to_keyvalue().serialize().
  std::string fingerprint() const;
  Architecture architecture() const;
  void validate() const;
};

/// Names accepted in `suites`.
const std::vector<std::string>& known_suites();

// --- stage building blocks (one per CLI subcommand) -------------------------

struct SeedData {
  Dataset train_clean;
  Dataset test;      ///< clean, train normalization
  Dataset eval_set;  ///< test plus barred c1/c2 copies
};

SeedData prepare_data(const ExperimentConfig& cfg, std::uint64_t seed);

/// Selection rule with a random rule's seed mixed with the run seed.
SelectionRule seeded_rule(const SelectionRule& rule, std::uint64_t seed);

/// Trains on the clean train set up to the snapshot and scores it.
DifficultyTable clean_reference_table(const ExperimentConfig& cfg, std::uint64_t seed,
                                      const Dataset& clean);

/// Injects cfg.spurious with `rule` (seeded), using a clean reference table
/// when the rule is rank based.
Dataset inject_for_seed(const ExperimentConfig& cfg, std::uint64_t seed, const Dataset& clean,
                        const SelectionRule& rule, const DifficultyTable* clean_table);

TrainResult train_for_seed(const ExperimentConfig& cfg, std::uint64_t seed, const Dataset& train,
                           bool stop_after_snapshot = false, EpochHook hook = {});

/// Group report plus the (c1, victim) spurious rate.
EvalReport evaluate_for_config(const ExperimentConfig& cfg, const Network& net,
                               const Dataset& eval_set, const GroupWeights& weights);

// --- report -----------------------------------------------------------------

struct PipelineRecord {
  std::uint64_t seed = 0;
  EvalReport pre;
  EvalReport post;
  std::size_t train_size = 0;
  std::size_t removed = 0;
};

struct DynamicsRecord {
  std::uint64_t seed = 0;
  std::string arm;  ///< "easiest" or "hardest"
  std::vector<TrackingRecord> series;
};

struct ScanRecord {
  std::uint64_t seed = 0;
  std::size_t start = 0;
  std::size_t k = 0;
  double spurious_rate = 0.0;
  double worst_group_accuracy = 0.0;
};

struct ExclusionRecord {
  std::uint64_t seed = 0;
  std::string arm;  ///< "none", "hardest", "easiest"
  std::string rule;
  std::size_t pool = 0;
  std::size_t removed = 0;
  double worst_group_accuracy = 0.0;
  double clean_accuracy = 0.0;
  double spurious_rate = 0.0;
};

struct QuartileRecord {
  std::uint64_t seed = 0;
  QuartileReport report;
  SettingVerdict verdict;
};

struct BlindPruneRecord {
  std::uint64_t seed = 0;
  double fraction = 0.0;
  std::size_t removed = 0;
  double spurious_rate = 0.0;
  double worst_group_accuracy = 0.0;
  double clean_accuracy = 0.0;
};

struct ProbeRecord {
  std::uint64_t seed = 0;
  ProbeResult result;
};

struct ExperimentReport {
  std::string fingerprint;
  std::string config;  ///< canonical key-value text
  std::vector<std::uint64_t> seeds;
  std::vector<PipelineRecord> pipeline;
  std::vector<DynamicsRecord> fig3;
  std::vector<ScanRecord> fig4;
  std::vector<ExclusionRecord> fig5;
  std::vector<QuartileRecord> fig6;
  std::vector<BlindPruneRecord> fig7;
  std::vector<ProbeRecord> probe;
};

/// Starts 0, stride, 2*stride, ... below n - k, then n - k.
std::vector<std::size_t> window_starts(std::size_t n, std::size_t k, std::size_t stride);

/// Runs pipeline stages; artifacts go under artifacts_dir/seed_<n> when set.
std::vector<PipelineRecord> run_pipeline(const ExperimentConfig& cfg,
                                         const std::filesystem::path* artifacts_dir = nullptr);
std::vector<DynamicsRecord> easiest_vs_hardest(const ExperimentConfig& cfg);
std::vector<ScanRecord> scan_difficulty_windows(const ExperimentConfig& cfg, std::size_t k,
                                                std::size_t stride);
std::vector<ExclusionRecord> exclusion_experiment(const ExperimentConfig& cfg);
std::vector<QuartileRecord> quartile_suite(const ExperimentConfig& cfg);
std::vector<BlindPruneRecord> blind_prune_suite(const ExperimentConfig& cfg);
std::vector<ProbeRecord> probe_suite(const ExperimentConfig& cfg);

/// Every suite listed in cfg.suites.
ExperimentReport run_experiment(const ExperimentConfig& cfg,
                                const std::filesystem::path* artifacts_dir = nullptr);

/// One CSV per non-empty section (pipeline, fig3..fig7, probe) plus
/// report.json. Every file starts with "# config_fingerprint=<hex>".
/// Returns the written paths.
std::vector<std::filesystem::path> emit_outputs(const ExperimentReport& report,
                                                const std::filesystem::path& dir);

}  // namespace spursever
