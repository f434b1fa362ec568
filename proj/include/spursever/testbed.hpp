#pragma once

// Synthetic grating datasets with a per-sample noise knob, plus the vertical
// bar used as the spurious feature.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace spursever {

struct DifficultyTable;

struct GridShape {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 3;

  std::size_t size() const { return height * width * channels; }
  void validate() const;
  bool operator==(const GridShape&) const = default;
};

enum class Split { train, test };

std::string to_string(Split split);
Split split_from_string(std::string_view text);

/// (class, spurious presence) environment.
constexpr std::uint32_t group_of(std::uint32_t label, bool has_spurious) {
  return 2 * label + (has_spurious ? 1u : 0u);
}

struct Sample {
  std::uint64_t id = 0;
  std::uint32_t label = 0;
  double core_noise = 0.0;
  bool has_spurious = false;
  std::uint32_t group_id = 0;
};

/// Per-channel statistics used to normalize features.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

class Dataset {
 public:
  Dataset() = default;
  Dataset(GridShape grid, std::size_t classes, Split split, std::uint64_t seed);

  void add(const Sample& sample, std::span<const float> x);

  std::size_t size() const { return samples_.size(); }
  std::size_t classes() const { return classes_; }
  const GridShape& grid() const { return grid_; }
  Split split() const { return split_; }
  std::uint64_t seed() const { return seed_; }

  const std::vector<Sample>& samples() const { return samples_; }
  const Sample& sample(std::size_t index) const { return samples_[index]; }
  std::span<const float> features(std::size_t index) const;
  std::span<float> mutable_features(std::size_t index);
  const std::vector<float>& raw_features() const { return features_; }

  /// Marks a sample as carrying (or not) the spurious feature; keeps group_id in sync.
  void set_spurious(std::size_t index, bool flag);

  const NormStats& norm() const { return norm_; }
  void set_norm(NormStats stats);
  /// Per-channel mean/std of the current features.
  NormStats compute_norm() const;
  /// Row-major (size x grid.size()) matrix of (x - mean) / std.
  std::vector<float> normalized_features() const;

  std::vector<std::uint32_t> labels() const;
  std::vector<std::size_t> class_counts() const;
  std::vector<std::uint64_t> ids() const;
  std::vector<std::uint64_t> ids_of_class(std::uint32_t c) const;
  std::optional<std::size_t> index_of(std::uint64_t id) const;
  std::size_t spurious_count() const;

  /// Copy without the listed ids. Unknown ids are an input error.
  Dataset without(std::span<const std::uint64_t> removed) const;

 private:
  GridShape grid_;
  std::size_t classes_ = 0;
  Split split_ = Split::train;
  std::uint64_t seed_ = 0;
  std::vector<Sample> samples_;
  std::vector<float> features_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
  NormStats norm_;
};

/// Per-sample sigma = min + (max - min) * u^gamma, u ~ U[0, 1).
/// gamma = 1 is uniform; gamma > 1 concentrates mass near min.
struct NoiseSpread {
  double min = 0.0;
  double max = 0.8;
  double gamma = 1.0;

  void validate() const;
  double sample(double u) const;
};

struct BaseSpec {
  std::size_t classes = 10;
  std::size_t n_per_class = 500;
  GridShape grid;
  NoiseSpread noise;
  double contrast = 0.08;   ///< grating amplitude around 0.5
  double frequency = 3.0;   ///< cycles across the grid

  void validate() const;
};

/// Class-major ids 0..C*n-1. Train sets get normalization statistics of
/// their own clean features; test sets should adopt the train statistics.
Dataset generate_base(const BaseSpec& spec, Split split, std::uint64_t seed);

/// Noise-free pattern of class c (grid.size() values, CHW).
std::vector<float> class_pattern(const BaseSpec& spec, std::uint32_t c);

struct SelectionRule {
  enum class Kind { easiest, hardest, window, random, all_of_class, explicit_ids };

  Kind kind = Kind::all_of_class;
  std::size_t k = 0;
  std::size_t start = 0;    ///< window start rank, easiest first
  std::uint64_t seed = 0;   ///< random only
  std::vector<std::uint64_t> ids;

  static SelectionRule easiest(std::size_t k);
  static SelectionRule hardest(std::size_t k);
  static SelectionRule window(std::size_t start, std::size_t k);
  static SelectionRule random(std::size_t k, std::uint64_t seed);
  static SelectionRule all_of_class();
  static SelectionRule explicit_ids(std::vector<std::uint64_t> ids);

  bool needs_ranking() const;

  /// "easiest:100", "hardest:100", "window:125:100", "random:100:7", "all",
  /// "ids:3 8 21". parse(describe()) round-trips.
  std::string describe() const;
  static SelectionRule parse(std::string_view text);
};

/// Applies a rule to an explicit pool of ids. Rank rules order by table score
/// (ties by ascending id). Random draws with its own seed; all returns the
/// pool ascending; explicit ids must all belong to the pool.
std::vector<std::uint64_t> select_from_pool(std::span<const std::uint64_t> pool,
                                            const SelectionRule& rule,
                                            const DifficultyTable* table);

/// select_from_pool over the samples of class c.
std::vector<std::uint64_t> select_samples(const Dataset& data, std::uint32_t c,
                                          const SelectionRule& rule,
                                          const DifficultyTable* table);

struct SpuriousSpec {
  std::uint32_t target_class = 0;
  std::size_t channel = 0;
  std::optional<std::size_t> column;  ///< leftmost bar column; nullopt = centered
  std::size_t width = 1;
  float value = 1.0f;
  SelectionRule selection = SelectionRule::all_of_class();

  /// Leftmost column of the bar on this grid.
  std::size_t first_column(const GridShape& grid) const;
  void validate(const GridShape& grid, std::size_t classes) const;
};

/// Width presets S1/S2/S3 -> 1/3/5 columns.
std::size_t strength_width(int preset);

/// Sets the bar pixels of one image (CHW) to spec.value.
void paint_bar(std::span<float> image, const GridShape& grid, const SpuriousSpec& spec);

Dataset inject_spurious(const Dataset& data, const SpuriousSpec& spec,
                        const DifficultyTable* table = nullptr);

struct SpuriousTestSet {
  Dataset injected;         ///< full test set; every c2 sample carries the bar
  Dataset clean_complement; ///< the untouched non-c2 samples
};

SpuriousTestSet make_spurious_test_set(const Dataset& test, const SpuriousSpec& spec,
                                       std::uint32_t victim_class);

/// Clean test samples plus barred copies of the c1 and c2 samples. Copies get
/// ids offset by id_offset so every (class, bar) group is measured.
Dataset make_evaluation_set(const Dataset& test, const SpuriousSpec& spec,
                            std::uint32_t victim_class, std::uint64_t id_offset);

// Dataset directory: dataset.manifest (key-value) + features.bin
// (little-endian f32, CHW per sample, dataset order).
void save_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace spursever
