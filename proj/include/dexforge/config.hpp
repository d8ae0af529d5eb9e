#pragma once

// Structured-text configuration: one "key = value" per line, '#' starts a
// comment, lists are comma separated, seed ranges are written "a..b".

#include "dexforge/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace dexforge::config {

class ConfigError : public ContractViolation {
 public:
  ConfigError(std::size_t line, const std::string& detail)
      : ContractViolation(line ? "line " + std::to_string(line) + ": " + detail : detail) {}
};

class KeyValues {
 public:
  static KeyValues parse(const std::string& text);
  static KeyValues load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;
  std::size_t line(const std::string& key) const;

  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const;

  /// Throws on the first key not in `known`.
  void reject_unknown(const std::set<std::string>& known) const;

 private:
  struct Entry {
    std::string value;
    std::size_t line{0};
  };
  std::map<std::string, Entry> entries_;
};

std::string trim(const std::string& s);
std::vector<std::string> split_list(const std::string& s);
double to_double(const std::string& s, std::size_t line = 0);
std::int64_t to_int(const std::string& s, std::size_t line = 0);
bool to_bool(const std::string& s, std::size_t line = 0);
/// "0..29" (inclusive) or "1, 4, 9".
std::vector<std::uint64_t> parse_seeds(const std::string& s, std::size_t line = 0);

}  // namespace dexforge::config
