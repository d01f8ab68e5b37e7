#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dyadic/dataset_io.hpp"
#include "dyadic/error.hpp"

namespace dyadic {

/// Flat `key = value` configuration. Keys are dotted (`dgp.g`), `#` starts a
/// comment, and each key may appear once.
class Config {
 public:
  static std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
  }

  static Config parse(std::string_view text) {
    Config c;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const std::string t = trim(line);
      if (t.empty()) continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
      }
      const std::string key = trim(std::string_view(t).substr(0, eq));
      const std::string value = trim(std::string_view(t).substr(eq + 1));
      if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
      if (c.values_.count(key)) throw ConfigError("config key '" + key + "' appears twice");
      c.values_[key] = value;
    }
    return c;
  }

  void set(const std::string& key, const std::string& value) { values_[key] = trim(value); }
  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

  /// Rejects any key outside `allowed`.
  void require_known(const std::set<std::string>& allowed) const {
    for (const auto& [k, v] : values_) {
      if (!allowed.count(k)) throw ConfigError("unknown config key '" + k + "'");
    }
  }

  std::string str(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::string str(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end() || it->second.empty()) throw ConfigError("missing config key '" + key + "'");
    return it->second;
  }

  double num(const std::string& key, double fallback) const { return has(key) ? num(key) : fallback; }
  double num(const std::string& key) const {
    try {
      return parse_double(str(key), key);
    } catch (const ConfigError&) {
      throw ConfigError("config key '" + key + "': expected a number, got '" + str(key, "") + "'");
    }
  }

  long integer(const std::string& key, long fallback) const { return has(key) ? integer(key) : fallback; }
  long integer(const std::string& key) const {
    try {
      return parse_integer(str(key), key);
    } catch (const ConfigError&) {
      throw ConfigError("config key '" + key + "': expected an integer, got '" + str(key, "") + "'");
    }
  }

  std::uint64_t seed(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const std::string s = str(key);
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
      throw ConfigError("config key '" + key + "': expected a nonnegative integer seed, got '" + s + "'");
    }
    return v;
  }

  std::vector<double> num_list(const std::string& key) const {
    std::vector<double> out;
    const std::string text = str(key);
    for (auto f : split_fields(text)) {
      try {
        out.push_back(parse_double(f, key));
      } catch (const ConfigError&) {
        throw ConfigError("config key '" + key + "': bad list entry '" + std::string(f) + "'");
      }
    }
    return out;
  }

  std::vector<int> int_list(const std::string& key) const {
    std::vector<int> out;
    const std::string text = str(key);
    for (auto f : split_fields(text)) {
      try {
        out.push_back(static_cast<int>(parse_integer(f, key)));
      } catch (const ConfigError&) {
        throw ConfigError("config key '" + key + "': bad list entry '" + std::string(f) + "'");
      }
    }
    return out;
  }

  /// FNV-1a over the sorted `key=value` lines.
  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [k, v] : values_) {
      for (char c : k + "=" + v + "\n") {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
      }
    }
    return h;
  }

  std::string hash_hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
    return buf;
  }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace dyadic
