#include "spursever/difficulty.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "spursever/error.hpp"
#include "spursever/keyvalue.hpp"
#include "spursever/nn.hpp"
#include "spursever/testbed.hpp"

namespace spursever {

const DifficultyEntry* DifficultyTable::find(std::uint64_t id) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), id,
                             [](const DifficultyEntry& e, std::uint64_t v) { return e.id < v; });
  if (it == entries.end() || it->id != id) return nullptr;
  return &*it;
}

double DifficultyTable::score_of(std::uint64_t id) const {
  const auto* e = find(id);
  if (!e) throw InputError("difficulty table has no entry for id " + std::to_string(id));
  return e->score;
}

void DifficultyTable::canonicalize() {
  std::sort(entries.begin(), entries.end(),
            [](const DifficultyEntry& a, const DifficultyEntry& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < entries.size(); ++i)
    if (entries[i].id == entries[i - 1].id)
      throw InputError("difficulty table has duplicate id " + std::to_string(entries[i].id));
}

double el2n_score(std::span<const double> probs, std::uint32_t label) {
  if (label >= probs.size()) throw InputError("label out of range for probability vector");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= -1e-12 && p <= 1.0 + 1e-12)) throw InputError("probability outside [0, 1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-4) throw InputError("probabilities do not sum to 1");
  double sq = 0.0;
  for (std::size_t c = 0; c < probs.size(); ++c) {
    const double d = probs[c] - (c == label ? 1.0 : 0.0);
    sq += d * d;
  }
  return std::sqrt(sq);
}

DifficultyTable score_dataset(const Network& snapshot, const Dataset& data, std::size_t epoch,
                              kernels::Mode mode) {
  if (snapshot.architecture().input_dim != data.grid().size())
    throw InputError("snapshot input dimension does not match the dataset grid");
  if (snapshot.architecture().classes != data.classes())
    throw InputError("snapshot class count does not match the dataset");
  DifficultyTable table;
  table.epoch = epoch;
  if (data.size() == 0) return table;
  const auto features = data.normalized_features();
  const auto probs = forward_probs(snapshot, features, data.size(), mode);
  table.entries.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& s = data.sample(i);
    table.entries.push_back({s.id, s.label, el2n_score(probs.row(i), s.label), s.has_spurious,
                             s.core_noise});
  }
  table.canonicalize();
  return table;
}

std::vector<std::vector<std::uint64_t>> rank_per_class(const DifficultyTable& table,
                                                       const Dataset& data) {
  std::vector<std::vector<std::pair<double, std::uint64_t>>> per(data.classes());
  for (const auto& s : data.samples()) per[s.label].emplace_back(table.score_of(s.id), s.id);
  std::vector<std::vector<std::uint64_t>> out(data.classes());
  for (std::size_t c = 0; c < per.size(); ++c) {
    auto& v = per[c];
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    out[c].reserve(v.size());
    for (const auto& [score, id] : v) out[c].push_back(id);
  }
  return out;
}

DifficultyTable mean_of_tables(std::span<const DifficultyTable> tables) {
  if (tables.empty()) throw InputError("no tables to average");
  DifficultyTable out = tables[0];
  for (std::size_t t = 1; t < tables.size(); ++t) {
    if (tables[t].size() != out.size()) throw InputError("tables cover different sample sets");
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (tables[t].entries[i].id != out.entries[i].id)
        throw InputError("tables cover different sample sets");
      out.entries[i].score += tables[t].entries[i].score;
    }
  }
  for (auto& e : out.entries) e.score /= static_cast<double>(tables.size());
  return out;
}

void save_table_csv(const std::filesystem::path& path, const DifficultyTable& table) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# epoch=" << table.epoch << "\n";
  out << "id,class,score,has_spurious,core_noise\n";
  for (const auto& e : table.entries)
    out << e.id << ',' << e.label << ',' << format_double(e.score) << ',' << (e.has_spurious ? 1 : 0)
        << ',' << format_double(e.core_noise) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

DifficultyTable load_table_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  DifficultyTable table;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.front() == '#') {
      const auto eq = line.find("epoch=");
      if (eq != std::string::npos) table.epoch = parse_uint(line.substr(eq + 6), "epoch");
      continue;
    }
    if (!header) {
      if (line != "id,class,score,has_spurious,core_noise")
        throw IoError(path.string() + ": unexpected header '" + line + "'");
      header = true;
      continue;
    }
    const auto f = split_list(line);
    if (f.size() != 5) throw IoError(path.string() + ": malformed row '" + line + "'");
    table.entries.push_back({parse_uint(f[0], "id"), static_cast<std::uint32_t>(parse_uint(f[1], "class")),
                             parse_double(f[2], "score"), parse_uint(f[3], "has_spurious") != 0,
                             parse_double(f[4], "core_noise")});
  }
  table.canonicalize();
  return table;
}

}  // namespace spursever
