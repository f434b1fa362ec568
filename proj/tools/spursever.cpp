// spursever command-line entry point. Every subcommand takes
//   --config <file> --seed <n> --out <dir>
// Inputs of the single-stage subcommands come from `input.*` config keys and
// default to the conventional locations inside --out.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "spursever/difficulty.hpp"
#include "spursever/distribution.hpp"
#include "spursever/error.hpp"
#include "spursever/evaluation.hpp"
#include "spursever/experiment.hpp"
#include "spursever/nn.hpp"
#include "spursever/pruning.hpp"
#include "spursever/testbed.hpp"

namespace fs = std::filesystem;
using namespace spursever;

namespace {

constexpr const char* kOutputRootEnv = "SPURSEVER_OUTPUT_ROOT";

struct Invocation {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

struct Context {
  ExperimentConfig cfg;
  KeyValue inputs;  ///< input.* keys, stripped from the experiment config
  std::uint64_t seed = 0;
  fs::path out;

  fs::path input(const std::string& key, const fs::path& fallback) const {
    auto v = inputs.find("input." + key);
    return v ? fs::path(*v) : fallback;
  }
  /// Injected set when present, otherwise the clean one.
  fs::path train_dir() const {
    return input("train", fs::exists(out / "injected") ? out / "injected" : out / "train");
  }
};

Context load_context(const Invocation& inv) {
  Context ctx;
  KeyValue raw = inv.config_path.empty() ? KeyValue{} : KeyValue::load(inv.config_path);
  KeyValue rest;
  for (const auto& [k, v] : raw.entries()) {
    if (k.rfind("input.", 0) == 0) ctx.inputs.set(k, v);
    else rest.set(k, v);
  }
  if (inv.seed) rest.set("seeds", *inv.seed);
  ctx.cfg = ExperimentConfig::from_keyvalue(rest);
  ctx.seed = ctx.cfg.seeds.front();

  fs::path out = inv.out;
  if (const char* root = std::getenv(kOutputRootEnv); root && *root) {
    if (out.empty()) out = root;
    else if (out.is_relative()) out = fs::path(root) / out;
  }
  if (out.empty()) throw InputError(std::string("--out is required (or set ") + kOutputRootEnv + ")");
  fs::create_directories(out);
  ctx.out = out;
  return ctx;
}

std::string fingerprint_line(const Context& ctx) { return "config_fingerprint=" + ctx.cfg.fingerprint(); }

int cmd_generate(const Context& ctx) {
  const auto data = prepare_data(ctx.cfg, ctx.seed);
  save_dataset(ctx.out / "train", data.train_clean);
  save_dataset(ctx.out / "test", data.test);
  save_dataset(ctx.out / "eval", data.eval_set);
  std::cout << "generated " << data.train_clean.size() << " train, " << data.test.size() << " test, "
            << data.eval_set.size() << " eval samples in " << ctx.out << "\n";
  return 0;
}

int cmd_inject(const Context& ctx) {
  const auto clean = load_dataset(ctx.input("train", ctx.out / "train"));
  std::optional<DifficultyTable> table;
  if (ctx.cfg.spurious.selection.needs_ranking())
    table = load_table_csv(ctx.input("table", ctx.out / "difficulty.csv"));
  const auto injected = inject_for_seed(ctx.cfg, ctx.seed, clean, ctx.cfg.spurious.selection,
                                        table ? &*table : nullptr);
  save_dataset(ctx.out / "injected", injected);
  std::cout << "injected " << injected.spurious_count() << " samples into " << ctx.out / "injected" << "\n";
  return 0;
}

int cmd_train(const Context& ctx) {
  const auto data = load_dataset(ctx.train_dir());
  std::ofstream log(ctx.out / "train_log.csv");
  if (!log) throw IoError("cannot write " + (ctx.out / "train_log.csv").string());
  log << "# " << fingerprint_line(ctx) << "\nepoch,mean_loss,lr\n";
  auto hook = [&](const EpochRecord& r, const Network&) {
    log << r.epoch + 1 << ',' << format_double(r.mean_loss) << ',' << format_double(r.lr) << '\n';
  };
  const auto r = train_for_seed(ctx.cfg, ctx.seed, data, false, hook);
  save_checkpoint(ctx.out / "checkpoint", r.final_net, {ctx.seed, r.epochs_run});
  save_checkpoint(ctx.out / "snapshot", r.snapshot, {ctx.seed, r.snapshot_epoch});
  std::cout << "trained " << r.epochs_run << " epochs; final loss "
            << (r.epoch_loss.empty() ? 0.0 : r.epoch_loss.back()) << "\n";
  return 0;
}

int cmd_score(const Context& ctx) {
  CheckpointInfo info;
  const auto snap = load_checkpoint(ctx.input("snapshot", ctx.out / "snapshot"), &info);
  const auto data = load_dataset(ctx.train_dir());
  const auto table = score_dataset(snap, data, info.epoch, ctx.cfg.mode);
  save_table_csv(ctx.out / "difficulty.csv", table);
  std::cout << "scored " << table.size() << " samples at epoch " << info.epoch << "\n";
  return 0;
}

int cmd_prune(const Context& ctx) {
  const auto data = load_dataset(ctx.train_dir());
  std::optional<DifficultyTable> table;
  if (ctx.cfg.prune.needs_table()) table = load_table_csv(ctx.input("table", ctx.out / "difficulty.csv"));
  const auto r = apply_prune(data, ctx.cfg.prune, table ? &*table : nullptr);
  save_dataset(ctx.out / "pruned", r.data);
  save_removed_ids(ctx.out / "removed_ids.csv", r.removed);
  std::cout << "removed " << r.removed.size() << " samples; " << r.data.size() << " remain\n";
  return 0;
}

int cmd_eval(const Context& ctx) {
  const auto net = load_checkpoint(ctx.input("checkpoint", ctx.out / "checkpoint"));
  const auto eval_set = load_dataset(ctx.input("eval", ctx.out / "eval"));
  const auto reference = load_dataset(ctx.input("prevalence", ctx.train_dir()));
  const auto rep = evaluate_for_config(ctx.cfg, net, eval_set, group_prevalence(reference));
  save_eval_csv(ctx.out / "eval.csv", rep, fingerprint_line(ctx));
  std::ofstream(ctx.out / "eval.json") << eval_to_json(rep) << '\n';
  for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "WGA " << rep.worst_group_accuracy << ", clean accuracy " << rep.clean_accuracy
            << ", spurious rate " << rep.spurious_rates.front().rate << "\n";
  return 0;
}

int cmd_quartiles(const Context& ctx) {
  const auto data = load_dataset(ctx.train_dir());
  const auto table = load_table_csv(ctx.input("table", ctx.out / "difficulty.csv"));
  const auto rep = quartile_report(table, data);
  const auto verdict = classify_setting(rep, ctx.cfg.identifiable_threshold);
  save_quartiles_csv(ctx.out / "quartiles.csv", rep, fingerprint_line(ctx));
  std::cout << (verdict.identifiable ? "identifiable" : "unidentifiable") << " (Q1+Q2 = "
            << verdict.early_share << ", margin " << verdict.margin << ")\n";
  return 0;
}

int cmd_scan(const Context& ctx) {
  ExperimentConfig cfg = ctx.cfg;
  cfg.suites = {"fig4"};
  const auto rep = run_experiment(cfg);
  for (const auto& p : emit_outputs(rep, ctx.out)) std::cout << "wrote " << p << "\n";
  return 0;
}

int cmd_run(const Context& ctx) {
  const fs::path artifacts = ctx.out / "artifacts";
  const auto rep = run_experiment(ctx.cfg, &artifacts);
  for (const auto& p : emit_outputs(rep, ctx.out)) std::cout << "wrote " << p << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spurious-feature severing experiments on synthetic data"};
  app.require_subcommand(1);
  Invocation inv;
  std::uint64_t seed_value = 0;

  using Handler = int (*)(const Context&);
  const std::pair<const char*, Handler> commands[] = {
      {"generate", cmd_generate}, {"train", cmd_train},   {"score", cmd_score},
      {"inject", cmd_inject},     {"prune", cmd_prune},   {"eval", cmd_eval},
      {"quartiles", cmd_quartiles}, {"scan", cmd_scan},   {"run", cmd_run}};
  const char* help[] = {"generate clean train/test/eval datasets",
                        "train on a dataset and write final + snapshot checkpoints",
                        "score a dataset with the difficulty snapshot",
                        "inject the spurious bar into the train set",
                        "prune the train set",
                        "evaluate a checkpoint on the eval set",
                        "quartile report of spurious samples by difficulty",
                        "difficulty-window scan",
                        "run the configured suites end to end"};
  std::vector<std::pair<CLI::App*, Handler>> subs;
  std::size_t i = 0;
  for (const auto& [name, fn] : commands) {
    auto* sub = app.add_subcommand(name, help[i++]);
    sub->add_option("--config", inv.config_path, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed_value, "seed (overrides the config's seed list)");
    sub->add_option("--out", inv.out, "output directory");
    subs.emplace_back(sub, fn);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // usage errors share the bad-input exit code
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    for (auto& [sub, fn] : subs) {
      if (!sub->parsed()) continue;
      if (sub->count("--seed")) inv.seed = seed_value;
      return fn(load_context(inv));
    }
  } catch (const StageError& e) {
    std::cerr << "error: stage " << e.what() << "\n";
    return 1;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
