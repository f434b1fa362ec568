#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "spursever/error.hpp"
#include "spursever/experiment.hpp"
#include "spursever/stats.hpp"

namespace spursever {
namespace {

/// Seed rows first, then one aggregate row per key (mean of the metric
/// columns, sample stddev in the *_std columns).
class CsvTable {
 public:
  CsvTable(std::vector<std::string> keys, std::vector<std::string> metrics)
      : keys_(std::move(keys)), metrics_(std::move(metrics)) {}

  void add(std::uint64_t seed, std::vector<std::string> key, std::vector<double> values) {
    auto [it, fresh] = groups_.try_emplace(key);
    if (fresh) order_.push_back(key);
    it->second.push_back(values);
    rows_.push_back({std::to_string(seed), std::move(key), std::move(values)});
  }

  void write(const std::filesystem::path& path, const std::string& fingerprint) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "# config_fingerprint=" << fingerprint << "\n";
    out << "row,seed";
    for (const auto& k : keys_) out << ',' << k;
    for (const auto& m : metrics_) out << ',' << m;
    for (const auto& m : metrics_) out << ',' << m << "_std";
    out << '\n';
    for (const auto& r : rows_) {
      out << "seed," << r.seed;
      for (const auto& k : r.key) out << ',' << k;
      for (double v : r.values) out << ',' << format_double(v);
      for (std::size_t i = 0; i < metrics_.size(); ++i) out << ',';
      out << '\n';
    }
    for (const auto& key : order_) {
      const auto& vals = groups_.at(key);
      out << "aggregate,mean";
      for (const auto& k : key) out << ',' << k;
      std::vector<double> sd;
      for (std::size_t m = 0; m < metrics_.size(); ++m) {
        std::vector<double> col;
        for (const auto& v : vals) col.push_back(v[m]);
        out << ',' << format_double(stats::mean(col));
        sd.push_back(stats::stddev(col));
      }
      for (double s : sd) out << ',' << format_double(s);
      out << '\n';
    }
    if (!out) throw IoError("write failed for " + path.string());
  }

 private:
  struct Row {
    std::string seed;
    std::vector<std::string> key;
    std::vector<double> values;
  };
  std::vector<std::string> keys_, metrics_;
  std::vector<Row> rows_;
  std::vector<std::vector<std::string>> order_;
  std::map<std::vector<std::string>, std::vector<std::vector<double>>> groups_;
};

nlohmann::json group_json(const EvalReport& r) {
  return nlohmann::json::parse(eval_to_json(r));
}

}  // namespace

std::vector<std::filesystem::path> emit_outputs(const ExperimentReport& report,
                                                const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  auto emit = [&](const char* name, const CsvTable& t) {
    const auto p = dir / name;
    t.write(p, report.fingerprint);
    written.push_back(p);
  };
  nlohmann::json j;
  j["config_fingerprint"] = report.fingerprint;
  j["config"] = report.config;
  j["seeds"] = report.seeds;
  j["wga_measured_at"] = "final_epoch";

  if (!report.pipeline.empty()) {
    CsvTable t({"stage"}, {"worst_group_accuracy", "weighted_mean_accuracy", "clean_accuracy",
                           "spurious_rate", "train_size", "removed"});
    for (const auto& r : report.pipeline) {
      for (const auto& [name, e] : {std::pair{"pre", &r.pre}, std::pair{"post", &r.post}})
        t.add(r.seed, {name}, {e->worst_group_accuracy, e->weighted_mean_accuracy, e->clean_accuracy,
                               e->spurious_rates.front().rate, static_cast<double>(r.train_size),
                               static_cast<double>(r.removed)});
      j["pipeline"].push_back({{"seed", r.seed}, {"pre", group_json(r.pre)}, {"post", group_json(r.post)},
                               {"train_size", r.train_size}, {"removed", r.removed}});
    }
    emit("pipeline.csv", t);
  }
  if (!report.fig3.empty()) {
    CsvTable t({"arm", "epoch"}, {"spurious_rate", "worst_group_accuracy", "clean_accuracy"});
    for (const auto& r : report.fig3) {
      nlohmann::json series = nlohmann::json::array();
      for (const auto& e : r.series) {
        t.add(r.seed, {r.arm, std::to_string(e.epoch + 1)}, {e.spurious_rate, e.worst_group_accuracy, e.clean_accuracy});
        series.push_back({{"epoch", e.epoch + 1}, {"spurious_rate", e.spurious_rate},
                          {"worst_group_accuracy", e.worst_group_accuracy}, {"clean_accuracy", e.clean_accuracy}});
      }
      j["fig3"].push_back({{"seed", r.seed}, {"arm", r.arm}, {"series", series}});
    }
    emit("fig3.csv", t);
  }
  if (!report.fig4.empty()) {
    CsvTable t({"window_start", "window_size"}, {"spurious_rate", "worst_group_accuracy"});
    for (const auto& r : report.fig4) {
      t.add(r.seed, {std::to_string(r.start), std::to_string(r.k)}, {r.spurious_rate, r.worst_group_accuracy});
      j["fig4"].push_back({{"seed", r.seed}, {"window_start", r.start}, {"window_size", r.k},
                           {"spurious_rate", r.spurious_rate}, {"worst_group_accuracy", r.worst_group_accuracy}});
    }
    emit("fig4.csv", t);
  }
  if (!report.fig5.empty()) {
    CsvTable t({"arm", "rule"}, {"pool", "removed", "worst_group_accuracy", "clean_accuracy", "spurious_rate"});
    for (const auto& r : report.fig5) {
      t.add(r.seed, {r.arm, r.rule}, {static_cast<double>(r.pool), static_cast<double>(r.removed),
                                      r.worst_group_accuracy, r.clean_accuracy, r.spurious_rate});
      j["fig5"].push_back({{"seed", r.seed}, {"arm", r.arm}, {"rule", r.rule}, {"pool", r.pool},
                           {"removed", r.removed}, {"worst_group_accuracy", r.worst_group_accuracy},
                           {"clean_accuracy", r.clean_accuracy}, {"spurious_rate", r.spurious_rate}});
    }
    emit("fig5.csv", t);
  }
  if (!report.fig6.empty()) {
    CsvTable t({"quartile"}, {"count", "share"});
    for (const auto& r : report.fig6) {
      for (std::size_t q = 0; q < 4; ++q)
        t.add(r.seed, {"Q" + std::to_string(q + 1)}, {static_cast<double>(r.report.counts[q]), r.report.shares[q]});
      j["fig6"].push_back({{"seed", r.seed}, {"counts", r.report.counts}, {"shares", r.report.shares},
                           {"identifiable", r.verdict.identifiable}, {"early_share", r.verdict.early_share},
                           {"margin", r.verdict.margin}, {"threshold", r.verdict.threshold}});
    }
    emit("fig6.csv", t);
  }
  if (!report.fig7.empty()) {
    CsvTable t({"fraction"}, {"removed", "spurious_rate", "worst_group_accuracy", "clean_accuracy"});
    for (const auto& r : report.fig7) {
      t.add(r.seed, {format_double(r.fraction)}, {static_cast<double>(r.removed), r.spurious_rate,
                                                  r.worst_group_accuracy, r.clean_accuracy});
      j["fig7"].push_back({{"seed", r.seed}, {"fraction", r.fraction}, {"removed", r.removed},
                           {"spurious_rate", r.spurious_rate}, {"worst_group_accuracy", r.worst_group_accuracy},
                           {"clean_accuracy", r.clean_accuracy}});
    }
    emit("fig7.csv", t);
  }
  if (!report.probe.empty()) {
    CsvTable t({"epoch"}, {"accuracy_spurious", "accuracy_clean", "gap", "n_spurious", "n_clean"});
    for (const auto& r : report.probe) {
      const auto& p = r.result;
      t.add(r.seed, {std::to_string(p.epoch)}, {p.accuracy_spurious, p.accuracy_clean, p.gap,
                                                static_cast<double>(p.n_spurious), static_cast<double>(p.n_clean)});
      j["probe"].push_back({{"seed", r.seed}, {"epoch", p.epoch}, {"accuracy_spurious", p.accuracy_spurious},
                            {"accuracy_clean", p.accuracy_clean}, {"gap", p.gap}});
    }
    emit("probe.csv", t);
  }

  const auto jp = dir / "report.json";
  std::ofstream out(jp);
  if (!out) throw IoError("cannot write " + jp.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + jp.string());
  written.push_back(jp);
  return written;
}

}  // namespace spursever
