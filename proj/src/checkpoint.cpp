#include <fstream>

#include "binary_io.hpp"
#include "spursever/error.hpp"
#include "spursever/keyvalue.hpp"
#include "spursever/nn.hpp"

namespace spursever {

void save_checkpoint(const std::filesystem::path& dir, const Network& net,
                     const CheckpointInfo& info) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  KeyValue m;
  m.set("architecture", net.architecture().descriptor());
  m.set("seed", info.seed);
  m.set("epoch", static_cast<std::uint64_t>(info.epoch));
  m.set("parameters", static_cast<std::uint64_t>(net.parameter_count()));
  m.set("format", "f32le");
  m.save(dir / "checkpoint.manifest");

  std::ofstream out(dir / "params.bin", std::ios::binary);
  if (!out) throw IoError("cannot write " + (dir / "params.bin").string());
  for (const auto& t : net.parameters().tensors) detail::write_f32_le(out, t);
  if (!out) throw IoError("write failed for " + (dir / "params.bin").string());
}

Network load_checkpoint(const std::filesystem::path& dir, CheckpointInfo* info) {
  const auto m = KeyValue::load(dir / "checkpoint.manifest");
  if (m.get_string("format", "f32le") != "f32le") throw IoError("unsupported checkpoint format");
  const auto arch = Architecture::parse(m.require("architecture"));
  Network net = Network::zeros(arch);
  if (m.get_uint("parameters", net.parameter_count()) != net.parameter_count())
    throw IoError("checkpoint parameter count does not match its architecture");

  const auto bin = dir / "params.bin";
  if (detail::file_size_or_throw(bin) != net.parameter_count() * sizeof(float))
    throw IoError(bin.string() + " has the wrong size");
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw IoError("cannot open " + bin.string());
  for (auto& t : net.parameters().tensors) detail::read_f32_le(in, t);
  if (!in) throw IoError("read failed for " + bin.string());
  if (info) {
    info->seed = m.get_uint("seed", 0);
    info->epoch = m.get_uint("epoch", 0);
  }
  return net;
}

}  // namespace spursever
