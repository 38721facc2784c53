#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mdcsrn/tensor/error.hpp"

namespace mdcsrn {

/// Flat `key = value` configuration. Lines starting with '#' are comments.
/// Keys are namespaced by convention (train.lr, gan.lambda, patch.size).
class Config {
 public:
  static Config parse(const std::string& text, const std::string& origin = "<string>") {
    Config c;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
      const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
      if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
      c.values_[key] = value;
    }
    return c;
  }

  static Config load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read config file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path);
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  /// Later values win.
  void merge(const Config& other) {
    for (const auto& [k, v] : other.values_) values_[k] = v;
  }

  std::string get(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }
  std::string require(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing config key '" + key + "'");
    return it->second;
  }
  double get_double(const std::string& key, double fallback) const {
    return has(key) ? to_double(key, require(key)) : fallback;
  }
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
    return has(key) ? to_int(key, require(key)) : fallback;
  }
  bool get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string v = require(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
  }
  /// Comma-separated integers, e.g. "40,40,40". A single value is repeated
  /// to `repeat` entries when given.
  std::vector<std::int64_t> get_ints(const std::string& key, std::vector<std::int64_t> fallback,
                                     std::size_t repeat = 0) const {
    if (!has(key)) return fallback;
    std::vector<std::int64_t> out;
    std::stringstream ss(require(key));
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_int(key, trim(item)));
    if (repeat && out.size() == 1) out.assign(repeat, out[0]);
    if (repeat && out.size() != repeat)
      throw ConfigError("config key '" + key + "': expected " + std::to_string(repeat) + " values");
    return out;
  }

  /// Throws on keys outside `known`, so typos don't silently fall back to defaults.
  void require_known(const std::set<std::string>& known) const {
    for (const auto& [k, v] : values_)
      if (!known.count(k)) throw ConfigError("unknown config key '" + k + "'");
  }

  std::string dump() const {
    std::string s;
    for (const auto& [k, v] : values_) s += k + " = " + v + "\n";
    return s;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
  }
  static double to_double(const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      double d = std::stod(v, &used);
      if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
  static std::int64_t to_int(const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      long long d = std::stoll(v, &used);
      if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  }

  std::map<std::string, std::string> values_;
};

}  // namespace mdcsrn
