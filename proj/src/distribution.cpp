#include "spursever/distribution.hpp"

#include <algorithm>
#include <fstream>

#include "spursever/difficulty.hpp"
#include "spursever/error.hpp"
#include "spursever/keyvalue.hpp"
#include "spursever/testbed.hpp"

namespace spursever {

std::array<std::size_t, 4> quartile_sizes(std::size_t n) {
  std::array<std::size_t, 4> out;
  const std::size_t base = n / 4, rem = n % 4;
  for (std::size_t q = 0; q < 4; ++q) out[q] = base + (q >= 4 - rem ? 1 : 0);
  return out;
}

QuartileReport quartile_report(const DifficultyTable& table, const Dataset& data) {
  std::vector<std::tuple<double, std::uint64_t, bool>> order;
  order.reserve(data.size());
  for (const auto& s : data.samples()) order.emplace_back(table.score_of(s.id), s.id, s.has_spurious);
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    return std::get<0>(a) != std::get<0>(b) ? std::get<0>(a) < std::get<0>(b)
                                            : std::get<1>(a) < std::get<1>(b);
  });
  QuartileReport rep;
  rep.sizes = quartile_sizes(order.size());
  std::size_t pos = 0;
  for (std::size_t q = 0; q < 4; ++q)
    for (std::size_t i = 0; i < rep.sizes[q]; ++i, ++pos)
      if (std::get<2>(order[pos])) ++rep.counts[q];
  for (auto c : rep.counts) rep.spurious_total += c;
  if (rep.spurious_total == 0) throw InputError("quartile report needs at least one spurious sample");
  for (std::size_t q = 0; q < 4; ++q)
    rep.shares[q] = static_cast<double>(rep.counts[q]) / static_cast<double>(rep.spurious_total);
  return rep;
}

SettingVerdict classify_setting(const QuartileReport& report, double threshold) {
  SettingVerdict v;
  v.threshold = threshold;
  v.early_share = report.shares[0] + report.shares[1];
  v.margin = v.early_share - threshold;
  v.identifiable = v.early_share >= threshold;
  return v;
}

void save_quartiles_csv(const std::filesystem::path& path, const QuartileReport& report,
                        const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  out << "quartile,count,share\n";
  for (std::size_t q = 0; q < 4; ++q)
    out << "Q" << q + 1 << ',' << report.counts[q] << ',' << format_double(report.shares[q]) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

TrainConfig probe_config(const TrainConfig& base, double wd_multiplier) {
  TrainConfig cfg = base;
  cfg.weight_decay = base.weight_decay * wd_multiplier;
  return cfg;
}

ProbeResult identifiability_probe(const Dataset& data, const Architecture& arch,
                                  const TrainConfig& cfg, std::size_t probe_epoch,
                                  std::uint32_t c1, kernels::Mode mode) {
  if (c1 >= data.classes()) throw InputError("probe class out of range");
  TrainConfig run = cfg;
  run.difficulty_epoch = probe_epoch;
  run.epochs = std::max(run.epochs, probe_epoch + 1);
  TrainOptions opt;
  opt.mode = mode;
  opt.stop_after_snapshot = true;
  const auto features = data.normalized_features();
  const auto labels = data.labels();
  auto result = train(Network::initialize(arch, cfg.seed), features, labels, run, opt);
  const auto pred = predict(result.snapshot, features, data.size(), mode);

  ProbeResult r;
  r.epoch = probe_epoch;
  std::size_t hit_s = 0, hit_c = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& s = data.sample(i);
    if (s.label != c1) continue;
    const bool ok = pred[i] == c1;
    if (s.has_spurious) {
      ++r.n_spurious;
      hit_s += ok;
    } else {
      ++r.n_clean;
      hit_c += ok;
    }
  }
  if (r.n_spurious) r.accuracy_spurious = static_cast<double>(hit_s) / static_cast<double>(r.n_spurious);
  if (r.n_clean) r.accuracy_clean = static_cast<double>(hit_c) / static_cast<double>(r.n_clean);
  r.gap = r.accuracy_spurious - r.accuracy_clean;
  return r;
}

}  // namespace spursever
