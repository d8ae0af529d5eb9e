#include "dexforge/config.hpp"

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace dexforge::config {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& s, std::size_t line) {
  const std::string t = trim(s);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size() || errno == ERANGE || !std::isfinite(v))
    throw ConfigError(line, "not a number: '" + s + "'");
  return v;
}

std::int64_t to_int(const std::string& s, std::size_t line) {
  const std::string t = trim(s);
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size())
    throw ConfigError(line, "not an integer: '" + s + "'");
  return v;
}

bool to_bool(const std::string& s, std::size_t line) {
  const std::string t = trim(s);
  if (t == "on" || t == "true" || t == "yes" || t == "1") return true;
  if (t == "off" || t == "false" || t == "no" || t == "0") return false;
  throw ConfigError(line, "not a switch (on/off): '" + s + "'");
}

std::vector<std::uint64_t> parse_seeds(const std::string& s, std::size_t line) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(s)) {
    const auto dots = item.find("..");
    if (dots == std::string::npos) {
      const auto v = to_int(item, line);
      if (v < 0) throw ConfigError(line, "negative seed '" + item + "'");
      out.push_back(static_cast<std::uint64_t>(v));
      continue;
    }
    const auto lo = to_int(item.substr(0, dots), line), hi = to_int(item.substr(dots + 2), line);
    if (lo < 0 || hi < lo) throw ConfigError(line, "bad seed range '" + item + "'");
    for (auto v = lo; v <= hi; ++v) out.push_back(static_cast<std::uint64_t>(v));
  }
  if (out.empty()) throw ConfigError(line, "empty seed list");
  return out;
}

KeyValues KeyValues::parse(const std::string& text) {
  KeyValues kv;
  std::stringstream in(text);
  std::string raw;
  std::size_t n = 0;
  while (std::getline(in, raw)) {
    ++n;
    const auto hash = raw.find('#');
    const std::string body = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(n, "expected 'key = value'");
    const std::string key = trim(body.substr(0, eq));
    if (key.empty()) throw ConfigError(n, "missing key");
    if (kv.entries_.count(key)) throw ConfigError(n, "duplicate key '" + key + "'");
    kv.entries_[key] = Entry{trim(body.substr(eq + 1)), n};
  }
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractViolation("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str());
  } catch (const ConfigError& e) {
    throw ContractViolation(path.string() + ": " + e.what());
  }
}

std::optional<std::string> KeyValues::get(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second.value;
}

std::size_t KeyValues::line(const std::string& key) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? 0 : it->second.line;
}

double KeyValues::get_double(const std::string& key, double fallback) const {
  const auto v = get(key);
  return v ? to_double(*v, line(key)) : fallback;
}

int KeyValues::get_int(const std::string& key, int fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  const auto i = to_int(*v, line(key));
  if (i < INT32_MIN || i > INT32_MAX) throw ConfigError(line(key), "integer out of range");
  return static_cast<int>(i);
}

std::uint64_t KeyValues::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  const auto i = to_int(*v, line(key));
  if (i < 0) throw ConfigError(line(key), "'" + key + "' must be non-negative");
  return static_cast<std::uint64_t>(i);
}

std::string KeyValues::get_string(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

std::vector<std::string> KeyValues::get_list(const std::string& key, const std::vector<std::string>& fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  auto items = split_list(*v);
  if (items.empty()) throw ConfigError(line(key), "empty list for '" + key + "'");
  return items;
}

void KeyValues::reject_unknown(const std::set<std::string>& known) const {
  for (const auto& [key, entry] : entries_)
    if (!known.count(key)) throw ConfigError(entry.line, "unknown key '" + key + "'");
}

}  // namespace dexforge::config
