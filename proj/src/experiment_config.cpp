#include <algorithm>
#include <cstdio>
#include <set>

#include "spursever/error.hpp"
#include "spursever/experiment.hpp"
#include "spursever/rng.hpp"

namespace spursever {
namespace {

const std::set<std::string, std::less<>>& allowed_keys() {
  static const std::set<std::string, std::less<>> keys = {
      "data.classes", "data.train_per_class", "data.test_per_class", "data.height", "data.width",
      "data.channels", "data.noise_min", "data.noise_max", "data.noise_gamma", "data.contrast",
      "data.frequency",
      "spurious.class", "spurious.victim", "spurious.channel", "spurious.column", "spurious.width",
      "spurious.strength", "spurious.value", "spurious.selection",
      "model.hidden",
      "train.epochs", "train.batch_size", "train.lr", "train.lr_milestones", "train.lr_factor",
      "train.momentum", "train.weight_decay", "train.difficulty_epoch",
      "prune.strategy", "prune.fraction", "prune.rule", "prune.seed", "prune.class_balance",
      "seeds", "suites", "kernel.mode",
      "fig3.k", "scan.k", "scan.stride", "exclusion.hardest_fraction", "exclusion.easiest_fraction",
      "blind.fractions", "probe.wd_multiplier", "probe.epoch", "quartiles.threshold",
      "output.datasets"};
  return keys;
}

std::vector<std::size_t> to_sizes(const std::vector<std::uint64_t>& v) {
  return {v.begin(), v.end()};
}

std::vector<std::uint64_t> to_u64(const std::vector<std::size_t>& v) {
  return {v.begin(), v.end()};
}

}  // namespace

const std::vector<std::string>& known_suites() {
  static const std::vector<std::string> s = {"pipeline", "fig3", "fig4", "fig5", "fig6", "fig7", "probe"};
  return s;
}

ExperimentConfig ExperimentConfig::from_keyvalue(const KeyValue& kv) {
  for (const auto& [k, v] : kv.entries())
    if (!allowed_keys().contains(k)) throw InputError("unknown config key '" + k + "'");

  ExperimentConfig c;
  c.base.classes = kv.get_uint("data.classes", c.base.classes);
  c.base.n_per_class = kv.get_uint("data.train_per_class", c.base.n_per_class);
  c.test_per_class = kv.get_uint("data.test_per_class", c.test_per_class);
  c.base.grid.height = kv.get_uint("data.height", c.base.grid.height);
  c.base.grid.width = kv.get_uint("data.width", c.base.grid.width);
  c.base.grid.channels = kv.get_uint("data.channels", c.base.grid.channels);
  c.base.noise.min = kv.get_double("data.noise_min", c.base.noise.min);
  c.base.noise.max = kv.get_double("data.noise_max", c.base.noise.max);
  c.base.noise.gamma = kv.get_double("data.noise_gamma", c.base.noise.gamma);
  c.base.contrast = kv.get_double("data.contrast", c.base.contrast);
  c.base.frequency = kv.get_double("data.frequency", c.base.frequency);

  c.spurious.target_class = static_cast<std::uint32_t>(kv.get_uint("spurious.class", 0));
  c.victim_class = static_cast<std::uint32_t>(kv.get_uint("spurious.victim", 1));
  c.spurious.channel = kv.get_uint("spurious.channel", 0);
  const auto column = kv.get_string("spurious.column", "center");
  if (column != "center") c.spurious.column = parse_uint(column, "spurious.column");
  if (kv.contains("spurious.strength") && kv.contains("spurious.width"))
    throw InputError("set either spurious.strength or spurious.width, not both");
  c.spurious.width = kv.contains("spurious.strength")
                         ? strength_width(static_cast<int>(kv.get_int("spurious.strength", 1)))
                         : kv.get_uint("spurious.width", 5);
  c.spurious.value = static_cast<float>(kv.get_double("spurious.value", 1.0));
  c.spurious.selection = SelectionRule::parse(kv.get_string("spurious.selection", "hardest:100"));

  c.hidden = to_sizes(kv.get_uints("model.hidden", to_u64(c.hidden)));

  c.train.epochs = kv.get_uint("train.epochs", c.train.epochs);
  c.train.batch_size = kv.get_uint("train.batch_size", c.train.batch_size);
  c.train.lr_initial = kv.get_double("train.lr", c.train.lr_initial);
  c.train.lr_milestones = to_sizes(kv.get_uints("train.lr_milestones", to_u64(c.train.lr_milestones)));
  c.train.lr_factor = kv.get_double("train.lr_factor", c.train.lr_factor);
  c.train.momentum = kv.get_double("train.momentum", c.train.momentum);
  c.train.weight_decay = kv.get_double("train.weight_decay", c.train.weight_decay);
  c.train.difficulty_epoch = kv.get_uint("train.difficulty_epoch", c.train.difficulty_epoch);

  c.prune.strategy = strategy_from_string(kv.get_string("prune.strategy", "none"));
  c.prune.fraction = kv.get_double("prune.fraction", 0.0);
  c.prune.rule = SelectionRule::parse(kv.get_string("prune.rule", "all"));
  c.prune.seed = kv.get_uint("prune.seed", 0);
  c.prune.class_balance = kv.get_bool("prune.class_balance", false);

  c.seeds = kv.get_uints("seeds", c.seeds);
  c.suites = kv.get_strings("suites", c.suites);
  c.mode = kernels::mode_from_string(kv.get_string("kernel.mode", "auto"));

  c.fig3_k = kv.get_uint("fig3.k", c.fig3_k);
  c.scan_k = kv.get_uint("scan.k", c.scan_k);
  c.scan_stride = kv.get_uint("scan.stride", c.scan_stride);
  c.exclusion_hardest = kv.get_double("exclusion.hardest_fraction", c.exclusion_hardest);
  c.exclusion_easiest = kv.get_double("exclusion.easiest_fraction", c.exclusion_easiest);
  c.blind_fractions = kv.get_doubles("blind.fractions", c.blind_fractions);
  c.probe_wd_multiplier = kv.get_double("probe.wd_multiplier", c.probe_wd_multiplier);
  if (kv.contains("probe.epoch")) c.probe_epoch = kv.get_uint("probe.epoch", 0);
  c.identifiable_threshold = kv.get_double("quartiles.threshold", c.identifiable_threshold);
  c.save_datasets = kv.get_bool("output.datasets", c.save_datasets);
  c.validate();
  return c;
}

KeyValue ExperimentConfig::to_keyvalue() const {
  KeyValue kv;
  kv.set("data.classes", static_cast<std::uint64_t>(base.classes));
  kv.set("data.train_per_class", static_cast<std::uint64_t>(base.n_per_class));
  kv.set("data.test_per_class", static_cast<std::uint64_t>(test_per_class));
  kv.set("data.height", static_cast<std::uint64_t>(base.grid.height));
  kv.set("data.width", static_cast<std::uint64_t>(base.grid.width));
  kv.set("data.channels", static_cast<std::uint64_t>(base.grid.channels));
  kv.set("data.noise_min", base.noise.min);
  kv.set("data.noise_max", base.noise.max);
  kv.set("data.noise_gamma", base.noise.gamma);
  kv.set("data.contrast", base.contrast);
  kv.set("data.frequency", base.frequency);
  kv.set("spurious.class", static_cast<std::uint64_t>(spurious.target_class));
  kv.set("spurious.victim", static_cast<std::uint64_t>(victim_class));
  kv.set("spurious.channel", static_cast<std::uint64_t>(spurious.channel));
  kv.set("spurious.column", spurious.column ? std::to_string(*spurious.column) : std::string("center"));
  kv.set("spurious.width", static_cast<std::uint64_t>(spurious.width));
  kv.set("spurious.value", static_cast<double>(spurious.value));
  kv.set("spurious.selection", spurious.selection.describe());
  kv.set("model.hidden", join_list(to_u64(hidden)));
  kv.set("train.epochs", static_cast<std::uint64_t>(train.epochs));
  kv.set("train.batch_size", static_cast<std::uint64_t>(train.batch_size));
  kv.set("train.lr", train.lr_initial);
  kv.set("train.lr_milestones", join_list(to_u64(train.lr_milestones)));
  kv.set("train.lr_factor", train.lr_factor);
  kv.set("train.momentum", train.momentum);
  kv.set("train.weight_decay", train.weight_decay);
  kv.set("train.difficulty_epoch", static_cast<std::uint64_t>(train.difficulty_epoch));
  kv.set("prune.strategy", to_string(prune.strategy));
  kv.set("prune.fraction", prune.fraction);
  kv.set("prune.rule", prune.rule.describe());
  kv.set("prune.seed", prune.seed);
  kv.set("prune.class_balance", prune.class_balance);
  kv.set("seeds", join_list(seeds));
  kv.set("suites", join_list(suites));
  kv.set("kernel.mode", std::string(kernels::to_string(mode)));
  kv.set("fig3.k", static_cast<std::uint64_t>(fig3_k));
  kv.set("scan.k", static_cast<std::uint64_t>(scan_k));
  kv.set("scan.stride", static_cast<std::uint64_t>(scan_stride));
  kv.set("exclusion.hardest_fraction", exclusion_hardest);
  kv.set("exclusion.easiest_fraction", exclusion_easiest);
  kv.set("blind.fractions", join_list(blind_fractions));
  kv.set("probe.wd_multiplier", probe_wd_multiplier);
  if (probe_epoch) kv.set("probe.epoch", static_cast<std::uint64_t>(*probe_epoch));
  kv.set("quartiles.threshold", identifiable_threshold);
  kv.set("output.datasets", save_datasets);
  return kv;
}

std::string ExperimentConfig::fingerprint() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(rng::fnv1a(to_keyvalue().serialize())));
  return buf;
}

Architecture ExperimentConfig::architecture() const {
  Architecture a;
  a.input_dim = base.grid.size();
  a.hidden = hidden;
  a.classes = base.classes;
  return a;
}

void ExperimentConfig::validate() const {
  base.validate();
  if (test_per_class == 0) throw InputError("data.test_per_class must be positive");
  spurious.validate(base.grid, base.classes);
  if (victim_class >= base.classes) throw InputError("spurious.victim is not a class of the dataset");
  if (victim_class == spurious.target_class) throw InputError("spurious.victim must differ from spurious.class");
  architecture().validate();
  train.validate();
  prune.validate();
  if (seeds.empty()) throw InputError("seeds must not be empty");
  if (suites.empty()) throw InputError("suites must not be empty");
  for (const auto& s : suites)
    if (std::find(known_suites().begin(), known_suites().end(), s) == known_suites().end())
      throw InputError("unknown suite '" + s + "'");
  if (!(exclusion_hardest >= 0.0 && exclusion_hardest <= 1.0) ||
      !(exclusion_easiest >= 0.0 && exclusion_easiest <= 1.0))
    throw InputError("exclusion fractions must lie in [0, 1]");
  for (double f : blind_fractions)
    if (!(f >= 0.0 && f < 1.0)) throw InputError("blind.fractions must lie in [0, 1)");
  if (!(probe_wd_multiplier >= 0.0)) throw InputError("probe.wd_multiplier must be non-negative");
}

}  // namespace spursever
