#include <fstream>

#include "binary_io.hpp"
#include "spursever/error.hpp"
#include "spursever/keyvalue.hpp"
#include "spursever/testbed.hpp"

namespace spursever {

void save_dataset(const std::filesystem::path& dir, const Dataset& data) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  KeyValue m;
  m.set("classes", static_cast<std::uint64_t>(data.classes()));
  m.set("grid.height", static_cast<std::uint64_t>(data.grid().height));
  m.set("grid.width", static_cast<std::uint64_t>(data.grid().width));
  m.set("grid.channels", static_cast<std::uint64_t>(data.grid().channels));
  m.set("split", to_string(data.split()));
  m.set("seed", data.seed());
  m.set("count", static_cast<std::uint64_t>(data.size()));
  std::vector<std::uint64_t> counts;
  for (auto c : data.class_counts()) counts.push_back(c);
  m.set("class_counts", join_list(counts));
  m.set("norm.mean", join_list(data.norm().mean));
  m.set("norm.stddev", join_list(data.norm().stddev));

  std::vector<std::uint64_t> ids, labels, flags, groups;
  std::vector<double> noise;
  for (const auto& s : data.samples()) {
    ids.push_back(s.id);
    labels.push_back(s.label);
    flags.push_back(s.has_spurious ? 1 : 0);
    groups.push_back(s.group_id);
    noise.push_back(s.core_noise);
  }
  m.set("sample.id", join_list(ids));
  m.set("sample.label", join_list(labels));
  m.set("sample.has_spurious", join_list(flags));
  m.set("sample.group_id", join_list(groups));
  m.set("sample.core_noise", join_list(noise));
  m.save(dir / "dataset.manifest");

  std::ofstream out(dir / "features.bin", std::ios::binary);
  if (!out) throw IoError("cannot write " + (dir / "features.bin").string());
  detail::write_f32_le(out, data.raw_features());
  if (!out) throw IoError("write failed for " + (dir / "features.bin").string());
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto m = KeyValue::load(dir / "dataset.manifest");
  GridShape grid{m.get_uint("grid.height", 0), m.get_uint("grid.width", 0), m.get_uint("grid.channels", 0)};
  Dataset data(grid, m.get_uint("classes", 0), split_from_string(m.require("split")), m.get_uint("seed", 0));

  const auto n = m.get_uint("count", 0);
  const auto ids = m.get_uints("sample.id", {});
  const auto labels = m.get_uints("sample.label", {});
  const auto flags = m.get_uints("sample.has_spurious", {});
  const auto groups = m.get_uints("sample.group_id", {});
  const auto noise = m.get_doubles("sample.core_noise", {});
  if (ids.size() != n || labels.size() != n || flags.size() != n || groups.size() != n || noise.size() != n)
    throw IoError(dir.string() + ": per-sample lists disagree with count");

  const auto bin = dir / "features.bin";
  if (detail::file_size_or_throw(bin) != n * grid.size() * sizeof(float))
    throw IoError(bin.string() + " has the wrong size");
  std::vector<float> features(n * grid.size());
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw IoError("cannot open " + bin.string());
  detail::read_f32_le(in, features);
  if (!in) throw IoError("read failed for " + bin.string());

  for (std::size_t i = 0; i < n; ++i) {
    Sample s{ids[i], static_cast<std::uint32_t>(labels[i]), noise[i], flags[i] != 0,
             static_cast<std::uint32_t>(groups[i])};
    data.add(s, std::span<const float>(features.data() + i * grid.size(), grid.size()));
  }
  const auto counts = m.get_uints("class_counts", {});
  const auto actual = data.class_counts();
  if (counts.size() != actual.size() || !std::equal(counts.begin(), counts.end(), actual.begin()))
    throw IoError(dir.string() + ": recorded class counts do not match the samples");
  auto mean = m.get_doubles("norm.mean", {});
  auto sd = m.get_doubles("norm.stddev", {});
  if (!mean.empty()) data.set_norm({std::move(mean), std::move(sd)});
  return data;
}

}  // namespace spursever
