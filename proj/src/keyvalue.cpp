#include "spursever/keyvalue.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <type_traits>

#include "spursever/error.hpp"

namespace spursever {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw IoError("cannot format double");
  return std::string(buf, ptr);
}

template <class T>
std::string join_list(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_floating_point_v<T>)
      out += format_double(values[i]);
    else if constexpr (std::is_arithmetic_v<T>)
      out += std::to_string(values[i]);
    else
      out += values[i];
  }
  return out;
}

template std::string join_list(const std::vector<double>&);
template std::string join_list(const std::vector<std::uint64_t>&);
template std::string join_list(const std::vector<std::string>&);

double parse_double(std::string_view text, std::string_view what) {
  text = trim(text);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw InputError(std::string(what) + ": expected a number, got '" + std::string(text) + "'");
  return v;
}

std::int64_t parse_int(std::string_view text, std::string_view what) {
  text = trim(text);
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw InputError(std::string(what) + ": expected an integer, got '" + std::string(text) + "'");
  return v;
}

std::uint64_t parse_uint(std::string_view text, std::string_view what) {
  text = trim(text);
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw InputError(std::string(what) + ": expected a non-negative integer, got '" +
                     std::string(text) + "'");
  return v;
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  text = trim(text);
  if (text.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    out.emplace_back(trim(text.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

KeyValue KeyValue::parse(std::string_view text) {
  KeyValue kv;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    ++line_no;
    auto line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    if (line.empty() || line.front() == '#') {
      if (nl == text.size()) break;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw InputError("line " + std::to_string(line_no) + ": expected 'key = value'");
    auto key = trim(line.substr(0, eq));
    if (key.empty()) throw InputError("line " + std::to_string(line_no) + ": empty key");
    kv.entries_[std::string(key)] = std::string(trim(line.substr(eq + 1)));
    if (nl == text.size()) break;
  }
  return kv;
}

KeyValue KeyValue::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void KeyValue::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << serialize();
  if (!out) throw IoError("write failed for " + path.string());
}

std::string KeyValue::serialize() const {
  std::string out;
  for (const auto& [k, v] : entries_) {
    out += k;
    out += " = ";
    out += v;
    out += '\n';
  }
  return out;
}

bool KeyValue::contains(std::string_view key) const { return entries_.find(key) != entries_.end(); }

void KeyValue::set(std::string key, std::string value) { entries_[std::move(key)] = std::move(value); }
void KeyValue::set(std::string key, bool value) { set(std::move(key), std::string(value ? "true" : "false")); }
void KeyValue::set(std::string key, double value) { set(std::move(key), format_double(value)); }
void KeyValue::set(std::string key, std::int64_t value) { set(std::move(key), std::to_string(value)); }
void KeyValue::set(std::string key, std::uint64_t value) { set(std::move(key), std::to_string(value)); }

std::optional<std::string> KeyValue::find(std::string_view key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

const std::string& KeyValue::require(std::string_view key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw InputError("missing key '" + std::string(key) + "'");
  return it->second;
}

std::string KeyValue::get_string(std::string_view key, std::string fallback) const {
  auto v = find(key);
  return v ? *v : std::move(fallback);
}

double KeyValue::get_double(std::string_view key, double fallback) const {
  auto v = find(key);
  return v ? parse_double(*v, key) : fallback;
}

std::int64_t KeyValue::get_int(std::string_view key, std::int64_t fallback) const {
  auto v = find(key);
  return v ? parse_int(*v, key) : fallback;
}

std::uint64_t KeyValue::get_uint(std::string_view key, std::uint64_t fallback) const {
  auto v = find(key);
  return v ? parse_uint(*v, key) : fallback;
}

bool KeyValue::get_bool(std::string_view key, bool fallback) const {
  auto v = find(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw InputError(std::string(key) + ": expected a boolean, got '" + *v + "'");
}

std::vector<double> KeyValue::get_doubles(std::string_view key,
                                          std::vector<double> fallback) const {
  auto v = find(key);
  if (!v) return fallback;
  std::vector<double> out;
  for (const auto& item : split_list(*v)) out.push_back(parse_double(item, key));
  return out;
}

std::vector<std::uint64_t> KeyValue::get_uints(std::string_view key,
                                               std::vector<std::uint64_t> fallback) const {
  auto v = find(key);
  if (!v) return fallback;
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(*v)) out.push_back(parse_uint(item, key));
  return out;
}

std::vector<std::string> KeyValue::get_strings(std::string_view key,
                                               std::vector<std::string> fallback) const {
  auto v = find(key);
  return v ? split_list(*v) : std::move(fallback);
}

}  // namespace spursever
