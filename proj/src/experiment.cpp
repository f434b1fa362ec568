#include "spursever/experiment.hpp"

#include <algorithm>
#include <cmath>

#include "spursever/error.hpp"
#include "spursever/rng.hpp"

namespace spursever {
namespace {

/// Runs fn, re-raising any failure as a StageError naming the stage.
template <class F>
auto stage(const std::string& name, std::uint64_t seed, F&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name + " (seed " + std::to_string(seed) + ")", e.what());
  }
}

std::size_t floor_count(double f, std::size_t n) {
  return static_cast<std::size_t>(std::floor(f * static_cast<double>(n)));
}

std::vector<std::uint64_t> spurious_ids_of(const Dataset& data, std::uint32_t c) {
  std::vector<std::uint64_t> out;
  for (const auto& s : data.samples())
    if (s.label == c && s.has_spurious) out.push_back(s.id);
  return out;
}

Dataset injected_training_set(const ExperimentConfig& cfg, std::uint64_t seed, const Dataset& clean) {
  std::optional<DifficultyTable> ref;
  if (cfg.spurious.selection.needs_ranking())
    ref = stage("train reference", seed, [&] { return clean_reference_table(cfg, seed, clean); });
  return stage("inject", seed, [&] {
    return inject_for_seed(cfg, seed, clean, cfg.spurious.selection, ref ? &*ref : nullptr);
  });
}

}  // namespace

SeedData prepare_data(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SeedData d;
  d.train_clean = generate_base(cfg.base, Split::train, seed);
  BaseSpec test_spec = cfg.base;
  test_spec.n_per_class = cfg.test_per_class;
  d.test = generate_base(test_spec, Split::test, seed);
  d.test.set_norm(d.train_clean.norm());
  const std::uint64_t offset = static_cast<std::uint64_t>(cfg.base.classes) * cfg.test_per_class;
  d.eval_set = make_evaluation_set(d.test, cfg.spurious, cfg.victim_class, offset);
  return d;
}

SelectionRule seeded_rule(const SelectionRule& rule, std::uint64_t seed) {
  SelectionRule r = rule;
  if (r.kind == SelectionRule::Kind::random) r.seed = rng::derive(seed, "spurious.select", rule.seed);
  return r;
}

TrainResult train_for_seed(const ExperimentConfig& cfg, std::uint64_t seed, const Dataset& train_set,
                           bool stop_after_snapshot, EpochHook hook) {
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  TrainOptions opt;
  opt.mode = cfg.mode;
  opt.stop_after_snapshot = stop_after_snapshot;
  opt.on_epoch = std::move(hook);
  return train(Network::initialize(cfg.architecture(), seed), train_set, tc, opt);
}

DifficultyTable clean_reference_table(const ExperimentConfig& cfg, std::uint64_t seed,
                                      const Dataset& clean) {
  const auto r = train_for_seed(cfg, seed, clean, true);
  return score_dataset(r.snapshot, clean, r.snapshot_epoch, cfg.mode);
}

Dataset inject_for_seed(const ExperimentConfig& cfg, std::uint64_t seed, const Dataset& clean,
                        const SelectionRule& rule, const DifficultyTable* clean_table) {
  SpuriousSpec spec = cfg.spurious;
  spec.selection = seeded_rule(rule, seed);
  return inject_spurious(clean, spec, clean_table);
}

EvalReport evaluate_for_config(const ExperimentConfig& cfg, const Network& net,
                               const Dataset& eval_set, const GroupWeights& weights) {
  const auto features = eval_set.normalized_features();
  const auto pred = predict(net, features, eval_set.size(), cfg.mode);
  auto rep = evaluate_predictions(eval_set, pred, weights);
  rep.spurious_rates.push_back(
      spurious_misclassification(eval_set, pred, cfg.spurious.target_class, cfg.victim_class));
  return rep;
}

std::vector<std::size_t> window_starts(std::size_t n, std::size_t k, std::size_t stride) {
  if (stride == 0) throw InputError("scan stride must be positive");
  if (k == 0 || k > n) throw InputError("scan window must be non-empty and fit inside the class");
  std::vector<std::size_t> out;
  const std::size_t last = n - k;
  for (std::size_t s = 0; s < last; s += stride) out.push_back(s);
  out.push_back(last);
  return out;
}

// ---------------------------------------------------------------------------

std::vector<PipelineRecord> run_pipeline(const ExperimentConfig& cfg,
                                         const std::filesystem::path* artifacts_dir) {
  cfg.validate();
  std::vector<PipelineRecord> out;
  for (auto seed : cfg.seeds) {
    std::filesystem::path dir;
    if (artifacts_dir) {
      dir = *artifacts_dir / ("seed_" + std::to_string(seed));
      std::filesystem::create_directories(dir);
    }
    const auto data = stage("generate", seed, [&] { return prepare_data(cfg, seed); });
    const auto train_set = injected_training_set(cfg, seed, data.train_clean);
    if (artifacts_dir && cfg.save_datasets)
      stage("persist datasets", seed, [&] {
        save_dataset(dir / "train", train_set);
        save_dataset(dir / "test", data.test);
        return 0;
      });

    const auto weights = group_prevalence(train_set);
    const auto trained = stage("train", seed, [&] { return train_for_seed(cfg, seed, train_set); });
    const auto table = stage("score", seed, [&] {
      return score_dataset(trained.snapshot, train_set, trained.snapshot_epoch, cfg.mode);
    });
    PipelineRecord rec;
    rec.seed = seed;
    rec.pre = stage("evaluate", seed, [&] { return evaluate_for_config(cfg, trained.final_net, data.eval_set, weights); });
    if (artifacts_dir)
      stage("persist training", seed, [&] {
        save_checkpoint(dir / "checkpoint", trained.final_net, {seed, trained.epochs_run});
        save_checkpoint(dir / "snapshot", trained.snapshot, {seed, trained.snapshot_epoch});
        save_table_csv(dir / "difficulty.csv", table);
        save_eval_csv(dir / "eval_pre.csv", rec.pre);
        return 0;
      });

    const auto pruned = stage("prune", seed, [&] { return apply_prune(train_set, cfg.prune, &table); });
    rec.train_size = pruned.data.size();
    rec.removed = pruned.removed.size();
    if (pruned.removed.empty()) {
      rec.post = rec.pre;
    } else {
      const auto retrained = stage("retrain", seed, [&] { return train_for_seed(cfg, seed, pruned.data); });
      rec.post = stage("evaluate", seed, [&] {
        return evaluate_for_config(cfg, retrained.final_net, data.eval_set, weights);
      });
      if (artifacts_dir)
        stage("persist retrain", seed, [&] {
          save_checkpoint(dir / "retrained", retrained.final_net, {seed, retrained.epochs_run});
          return 0;
        });
    }
    if (artifacts_dir)
      stage("persist prune", seed, [&] {
        save_removed_ids(dir / "removed_ids.csv", pruned.removed);
        save_eval_csv(dir / "eval_post.csv", rec.post);
        return 0;
      });
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<DynamicsRecord> easiest_vs_hardest(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<DynamicsRecord> out;
  for (auto seed : cfg.seeds) {
    const auto data = stage("generate", seed, [&] { return prepare_data(cfg, seed); });
    const auto ref = stage("train reference", seed, [&] { return clean_reference_table(cfg, seed, data.train_clean); });
    for (const auto& [arm, rule] : {std::pair{"easiest", SelectionRule::easiest(cfg.fig3_k)},
                                    std::pair{"hardest", SelectionRule::hardest(cfg.fig3_k)}}) {
      const auto train_set = stage("inject", seed, [&] { return inject_for_seed(cfg, seed, data.train_clean, rule, &ref); });
      TrainingTracker tracker(data.eval_set, group_prevalence(train_set), cfg.spurious.target_class,
                              cfg.victim_class, cfg.mode);
      stage("train", seed, [&] { return train_for_seed(cfg, seed, train_set, false, tracker.hook()); });
      out.push_back({seed, arm, tracker.series()});
    }
  }
  return out;
}

std::vector<ScanRecord> scan_difficulty_windows(const ExperimentConfig& cfg, std::size_t k,
                                                std::size_t stride) {
  cfg.validate();
  if (stride == 0) throw InputError("scan stride must be positive");
  const auto starts = window_starts(cfg.base.n_per_class, k, stride);
  std::vector<ScanRecord> out;
  for (auto seed : cfg.seeds) {
    const auto data = stage("generate", seed, [&] { return prepare_data(cfg, seed); });
    const auto ref = stage("train reference", seed, [&] { return clean_reference_table(cfg, seed, data.train_clean); });
    for (auto start : starts) {
      const auto train_set = stage("inject", seed, [&] {
        return inject_for_seed(cfg, seed, data.train_clean, SelectionRule::window(start, k), &ref);
      });
      const auto trained = stage("train", seed, [&] { return train_for_seed(cfg, seed, train_set); });
      const auto rep = evaluate_for_config(cfg, trained.final_net, data.eval_set, group_prevalence(train_set));
      out.push_back({seed, start, k, rep.spurious_rates.front().rate, rep.worst_group_accuracy});
    }
  }
  return out;
}

std::vector<ExclusionRecord> exclusion_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<ExclusionRecord> out;
  for (auto seed : cfg.seeds) {
    const auto data = stage("generate", seed, [&] { return prepare_data(cfg, seed); });
    const auto train_set = injected_training_set(cfg, seed, data.train_clean);
    const auto weights = group_prevalence(train_set);
    const auto pool = spurious_ids_of(train_set, cfg.spurious.target_class);
    if (pool.empty()) throw StageError("exclusion", "the spurious pool is empty");

    const auto trained = stage("train", seed, [&] { return train_for_seed(cfg, seed, train_set); });
    const auto table = stage("score", seed, [&] {
      return score_dataset(trained.snapshot, train_set, trained.snapshot_epoch, cfg.mode);
    });
    const auto none = evaluate_for_config(cfg, trained.final_net, data.eval_set, weights);
    out.push_back({seed, "none", "none", pool.size(), 0, none.worst_group_accuracy, none.clean_accuracy,
                   none.spurious_rates.front().rate});

    const std::pair<const char*, SelectionRule> arms[] = {
        {"hardest", SelectionRule::hardest(floor_count(cfg.exclusion_hardest, pool.size()))},
        {"easiest", SelectionRule::easiest(floor_count(cfg.exclusion_easiest, pool.size()))}};
    for (const auto& [arm, rule] : arms) {
      const auto pruned = stage("prune", seed, [&] { return prune_selection(train_set, pool, rule, &table); });
      const auto retrained = stage("retrain", seed, [&] { return train_for_seed(cfg, seed, pruned.data); });
      const auto rep = evaluate_for_config(cfg, retrained.final_net, data.eval_set, weights);
      out.push_back({seed, arm, rule.describe(), pool.size(), pruned.removed.size(), rep.worst_group_accuracy,
                     rep.clean_accuracy, rep.spurious_rates.front().rate});
    }
  }
  return out;
}

std::vector<QuartileRecord> quartile_suite(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<QuartileRecord> out;
  for (auto seed : cfg.seeds) {
    const auto clean = stage("generate", seed, [&] { return generate_base(cfg.base, Split::train, seed); });
    const auto train_set = injected_training_set(cfg, seed, clean);
    const auto r = stage("train", seed, [&] { return train_for_seed(cfg, seed, train_set, true); });
    const auto table = stage("score", seed, [&] { return score_dataset(r.snapshot, train_set, r.snapshot_epoch, cfg.mode); });
    const auto rep = stage("quartiles", seed, [&] { return quartile_report(table, train_set); });
    out.push_back({seed, rep, classify_setting(rep, cfg.identifiable_threshold)});
  }
  return out;
}

std::vector<BlindPruneRecord> blind_prune_suite(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<BlindPruneRecord> out;
  for (auto seed : cfg.seeds) {
    const auto data = stage("generate", seed, [&] { return prepare_data(cfg, seed); });
    const auto train_set = injected_training_set(cfg, seed, data.train_clean);
    const auto weights = group_prevalence(train_set);
    const auto trained = stage("train", seed, [&] { return train_for_seed(cfg, seed, train_set); });
    const auto table = stage("score", seed, [&] {
      return score_dataset(trained.snapshot, train_set, trained.snapshot_epoch, cfg.mode);
    });
    const auto base = evaluate_for_config(cfg, trained.final_net, data.eval_set, weights);
    out.push_back({seed, 0.0, 0, base.spurious_rates.front().rate, base.worst_group_accuracy, base.clean_accuracy});
    for (double f : cfg.blind_fractions) {
      if (f == 0.0) continue;
      const auto pruned = stage("prune", seed, [&] { return prune_hardest_per_class(train_set, table, f); });
      const auto retrained = stage("retrain", seed, [&] { return train_for_seed(cfg, seed, pruned.data); });
      const auto rep = evaluate_for_config(cfg, retrained.final_net, data.eval_set, weights);
      out.push_back({seed, f, pruned.removed.size(), rep.spurious_rates.front().rate, rep.worst_group_accuracy,
                     rep.clean_accuracy});
    }
  }
  return out;
}

std::vector<ProbeRecord> probe_suite(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<ProbeRecord> out;
  for (auto seed : cfg.seeds) {
    const auto clean = stage("generate", seed, [&] { return generate_base(cfg.base, Split::train, seed); });
    const auto train_set = injected_training_set(cfg, seed, clean);
    TrainConfig tc = probe_config(cfg.train, cfg.probe_wd_multiplier);
    tc.seed = seed;
    const auto epoch = cfg.probe_epoch.value_or(cfg.train.difficulty_epoch);
    const auto r = stage("probe", seed, [&] {
      return identifiability_probe(train_set, cfg.architecture(), tc, epoch, cfg.spurious.target_class, cfg.mode);
    });
    out.push_back({seed, r});
  }
  return out;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, const std::filesystem::path* artifacts_dir) {
  cfg.validate();
  ExperimentReport rep;
  rep.fingerprint = cfg.fingerprint();
  rep.config = cfg.to_keyvalue().serialize();
  rep.seeds = cfg.seeds;
  for (const auto& s : cfg.suites) {
    if (s == "pipeline") rep.pipeline = run_pipeline(cfg, artifacts_dir);
    else if (s == "fig3") rep.fig3 = easiest_vs_hardest(cfg);
    else if (s == "fig4")
      rep.fig4 = scan_difficulty_windows(cfg, cfg.scan_k,
                                         cfg.scan_stride ? cfg.scan_stride : std::max<std::size_t>(cfg.base.n_per_class / 4, 1));
    else if (s == "fig5") rep.fig5 = exclusion_experiment(cfg);
    else if (s == "fig6") rep.fig6 = quartile_suite(cfg);
    else if (s == "fig7") rep.fig7 = blind_prune_suite(cfg);
    else if (s == "probe") rep.probe = probe_suite(cfg);
  }
  return rep;
}

}  // namespace spursever
