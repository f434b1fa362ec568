#pragma once

// Dense ReLU classifier with softmax cross-entropy, trained by momentum SGD.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "spursever/kernels.hpp"

namespace spursever {

class Dataset;

/// input -> hidden... -> classes; every hidden layer is followed by ReLU and
/// the last layer emits raw logits.
struct Architecture {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden{128, 64};
  std::size_t classes = 0;

  /// "mlp:1024-128-64-10"
  std::string descriptor() const;
  static Architecture parse(std::string_view descriptor);

  std::size_t layer_count() const { return hidden.size() + 1; }
  std::size_t layer_in(std::size_t layer) const;
  std::size_t layer_out(std::size_t layer) const;
  void validate() const;

  bool operator==(const Architecture&) const = default;
};

/// Parameter tensors in declaration order: W0, b0, W1, b1, ...
/// Weights are row-major (out x in).
struct ParameterSet {
  std::vector<std::vector<float>> tensors;

  std::size_t count() const;
  float& at(std::size_t flat_index);
  float at(std::size_t flat_index) const;
};

class Network {
 public:
  Network() = default;

  /// Uniform He-style init U(-sqrt(6/fan_in), sqrt(6/fan_in)) for weights,
  /// zero biases, drawn from the "init" substream of seed.
  static Network initialize(const Architecture& arch, std::uint64_t seed);
  static Network zeros(const Architecture& arch);
  static Network from_parameters(const Architecture& arch, ParameterSet params);

  const Architecture& architecture() const { return arch_; }
  std::size_t parameter_count() const { return params_.count(); }
  const ParameterSet& parameters() const { return params_; }
  ParameterSet& parameters() { return params_; }

  std::span<const float> weight(std::size_t layer) const { return params_.tensors[2 * layer]; }
  std::span<const float> bias(std::size_t layer) const { return params_.tensors[2 * layer + 1]; }

 private:
  Network(Architecture arch, ParameterSet params);

  Architecture arch_;
  ParameterSet params_;
};

/// Same architecture and identical parameter bytes.
bool bitwise_equal(const Network& a, const Network& b);

/// Row-major probabilities, rows = samples, cols = classes.
struct ProbabilityMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  std::span<const double> row(std::size_t r) const {
    return {values.data() + r * cols, cols};
  }
};

/// Numerically stable softmax of one logit row.
void softmax(std::span<const float> logits, std::span<double> out);

ProbabilityMatrix forward_probs(const Network& net, std::span<const float> batch,
                                std::size_t rows,
                                kernels::Mode mode = kernels::Mode::reference);

struct LossAndGrads {
  double loss = 0.0;       ///< mean cross-entropy
  double objective = 0.0;  ///< loss + weight_decay / 2 * ||w||^2
  ParameterSet grads;      ///< d objective / d w
};

LossAndGrads loss_and_grads(const Network& net, std::span<const float> batch, std::size_t rows,
                            std::span<const std::uint32_t> labels, double weight_decay,
                            kernels::Mode mode = kernels::Mode::reference);

/// Objective evaluated entirely in double precision with a scalar forward
/// pass that shares no code with the kernel path. Used as the finite
/// difference oracle.
double objective_double(const Network& net, std::span<const float> batch, std::size_t rows,
                        std::span<const std::uint32_t> labels, double weight_decay,
                        std::size_t perturbed = SIZE_MAX, double delta = 0.0,
                        std::uint64_t* relu_pattern_hash = nullptr);

struct GradCheckOptions {
  double step = 1e-4;
  double tolerance = 1e-4;
  std::size_t coordinates = 64;  ///< at least 50 are always checked
  std::uint64_t seed = 0;
  double weight_decay = 0.0;
};

struct GradCheckResult {
  bool pass = false;
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;  ///< coordinates whose +-step straddled a ReLU kink
};

/// Compares supplied analytic gradients against central differences.
GradCheckResult compare_gradients(const Network& net, std::span<const float> batch,
                                  std::size_t rows, std::span<const std::uint32_t> labels,
                                  const ParameterSet& analytic, const GradCheckOptions& opt);

/// loss_and_grads (reference mode) checked against central differences.
GradCheckResult grad_check(const Network& net, std::span<const float> batch, std::size_t rows,
                           std::span<const std::uint32_t> labels, const GradCheckOptions& opt);

struct TrainConfig {
  std::size_t epochs = 60;
  std::size_t batch_size = 64;
  double lr_initial = 0.01;
  std::vector<std::size_t> lr_milestones{30, 45};
  double lr_factor = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
  /// Snapshot is taken after this many completed epochs (0 = initial net).
  std::size_t difficulty_epoch = 6;

  void validate() const;
  double lr_at(std::size_t epoch) const;
};

struct EpochRecord {
  std::size_t epoch = 0;  ///< 0-based index of the epoch just finished
  double mean_loss = 0.0;
  double lr = 0.0;
};

using EpochHook = std::function<void(const EpochRecord&, const Network&)>;

struct TrainOptions {
  kernels::Mode mode = kernels::fastest_mode();
  /// Return as soon as the difficulty snapshot exists.
  bool stop_after_snapshot = false;
  EpochHook on_epoch;
};

struct TrainResult {
  Network final_net;
  Network snapshot;
  std::size_t snapshot_epoch = 0;
  std::size_t epochs_run = 0;
  std::vector<double> epoch_loss;
};

/// Trains on a normalized feature matrix (rows x input_dim).
TrainResult train(Network net, std::span<const float> features, std::span<const std::uint32_t> labels,
                  const TrainConfig& cfg, const TrainOptions& opt = {});

/// Convenience overload: normalizes the dataset with its stored statistics.
TrainResult train(Network net, const Dataset& data, const TrainConfig& cfg,
                  const TrainOptions& opt = {});

/// Argmax class per row; ties go to the lowest class index.
std::vector<std::uint32_t> predict(const Network& net, std::span<const float> features,
                                   std::size_t rows, kernels::Mode mode);

// Checkpoint directory: checkpoint.manifest + params.bin (little-endian f32,
// declaration order).
struct CheckpointInfo {
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
};

void save_checkpoint(const std::filesystem::path& dir, const Network& net,
                     const CheckpointInfo& info);
Network load_checkpoint(const std::filesystem::path& dir, CheckpointInfo* info = nullptr);

}  // namespace spursever
