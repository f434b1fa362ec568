#pragma once

// Group accuracies, worst-group accuracy and the spurious misclassification rate.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "spursever/kernels.hpp"
#include "spursever/nn.hpp"

namespace spursever {

class Dataset;

using GroupWeights = std::map<std::uint32_t, double>;

struct GroupStats {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy = 0.0;
};

struct SpuriousRate {
  std::uint32_t c1 = 0;
  std::uint32_t c2 = 0;
  std::size_t hits = 0;   ///< flagged c2 samples predicted as c1
  std::size_t total = 0;  ///< flagged c2 samples
  double rate = 0.0;
};

struct EvalReport {
  std::map<std::uint32_t, GroupStats> groups;  ///< only non-empty groups
  double worst_group_accuracy = 0.0;
  std::uint32_t worst_group = 0;
  double weighted_mean_accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  double overall_accuracy = 0.0;  ///< all test samples
  double clean_accuracy = 0.0;    ///< samples without the bar
  std::vector<std::vector<std::size_t>> confusion;  ///< [true][predicted]
  std::vector<SpuriousRate> spurious_rates;
  std::vector<std::string> warnings;
};

/// Share of each group in a (typically unpruned) training set.
GroupWeights group_prevalence(const Dataset& train);

double worst_group_accuracy(const std::map<std::uint32_t, GroupStats>& groups);

/// sum_g w_g acc_g over the groups present, renormalized by the weight they carry.
double weighted_mean_accuracy(const std::map<std::uint32_t, GroupStats>& groups,
                              const GroupWeights& weights);

/// Pure metric core over precomputed predictions.
EvalReport evaluate_predictions(const Dataset& test, std::span<const std::uint32_t> predictions,
                                const GroupWeights& weights);

EvalReport evaluate_groups(const Network& net, const Dataset& test, const GroupWeights& weights,
                           kernels::Mode mode = kernels::Mode::reference);

SpuriousRate spurious_misclassification(const Dataset& test,
                                        std::span<const std::uint32_t> predictions,
                                        std::uint32_t c1, std::uint32_t c2);

double spurious_misclassification_rate(const Network& net, const Dataset& test, std::uint32_t c1,
                                       std::uint32_t c2,
                                       kernels::Mode mode = kernels::Mode::reference);

struct TrackingRecord {
  std::size_t epoch = 0;
  double spurious_rate = 0.0;
  double worst_group_accuracy = 0.0;
  double clean_accuracy = 0.0;
};

/// Evaluates a fixed set after every epoch. The set is normalized once.
class TrainingTracker {
 public:
  TrainingTracker(const Dataset& eval_set, GroupWeights weights, std::uint32_t c1,
                  std::uint32_t c2, kernels::Mode mode);

  EpochHook hook();
  const std::vector<TrackingRecord>& series() const { return series_; }

 private:
  const Dataset* eval_set_;
  std::vector<float> features_;
  GroupWeights weights_;
  std::uint32_t c1_, c2_;
  kernels::Mode mode_;
  std::vector<TrackingRecord> series_;
};

/// One row per group plus summary rows: kind,key,correct,total,value
void save_eval_csv(const std::filesystem::path& path, const EvalReport& report,
                   const std::string& header_comment = {});
std::string eval_to_json(const EvalReport& report);

}  // namespace spursever
