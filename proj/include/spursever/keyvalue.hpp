#pragma once

// Structured key-value text used for configs and manifests:
//
//   # comment
//   train.epochs = 60
//   seeds = 0, 1, 2
//
// Keys are dotted paths; values are raw strings converted on access. The
// canonical serialization sorts keys, which makes it usable for fingerprints.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace spursever {

class KeyValue {
 public:
  static KeyValue parse(std::string_view text);
  static KeyValue load(const std::filesystem::path& path);

  void save(const std::filesystem::path& path) const;
  std::string serialize() const;

  bool contains(std::string_view key) const;
  void set(std::string key, std::string value);
  void set(std::string key, const char* value) { set(std::move(key), std::string(value)); }
  void set(std::string key, bool value);
  void set(std::string key, double value);
  void set(std::string key, std::int64_t value);
  void set(std::string key, std::uint64_t value);
  void set(std::string key, int value) { set(std::move(key), static_cast<std::int64_t>(value)); }

  std::optional<std::string> find(std::string_view key) const;
  /// Throws InputError when the key is missing.
  const std::string& require(std::string_view key) const;

  std::string get_string(std::string_view key, std::string fallback) const;
  double get_double(std::string_view key, double fallback) const;
  std::int64_t get_int(std::string_view key, std::int64_t fallback) const;
  std::uint64_t get_uint(std::string_view key, std::uint64_t fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;
  std::vector<double> get_doubles(std::string_view key, std::vector<double> fallback) const;
  std::vector<std::uint64_t> get_uints(std::string_view key,
                                       std::vector<std::uint64_t> fallback) const;
  std::vector<std::string> get_strings(std::string_view key,
                                       std::vector<std::string> fallback) const;

  const std::map<std::string, std::string, std::less<>>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string, std::less<>> entries_;
};

/// Shortest round-trippable decimal for a double.
std::string format_double(double v);

/// Comma-joined list.
template <class T>
std::string join_list(const std::vector<T>& values);

double parse_double(std::string_view text, std::string_view what);
std::int64_t parse_int(std::string_view text, std::string_view what);
std::uint64_t parse_uint(std::string_view text, std::string_view what);
std::vector<std::string> split_list(std::string_view text);

}  // namespace spursever
