#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ctd/common.hpp"

namespace ctd {

/// Flat `key = value` configuration. `#` starts a comment; later
/// assignments override earlier ones. Keys keep first-appearance order so
/// that list-like sections (e.g. `group.<name>.*`) are read back in order.
class Config {
public:
  static Config parse(std::istream& in) {
    Config cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ValidationError("config line " + std::to_string(lineno) + ": expected 'key = value'");
      }
      auto key = trim(line.substr(0, eq));
      if (key.empty()) {
        throw ValidationError("config line " + std::to_string(lineno) + ": empty key");
      }
      cfg.set(key, trim(line.substr(eq + 1)));
    }
    return cfg;
  }

  static Config parse_string(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config " + path);
    return parse(in);
  }

  void set(const std::string& key, const std::string& value) {
    if (!values_.contains(key)) order_.push_back(key);
    values_[key] = value;
  }

  bool contains(const std::string& key) const { return values_.contains(key); }

  const std::vector<std::string>& keys() const { return order_; }

  std::optional<std::string> raw(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    return raw(key).value_or(fallback);
  }

  double get_double(const std::string& key, double fallback) const {
    auto v = raw(key);
    return v ? to_double(key, *v) : fallback;
  }

  std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
    auto v = raw(key);
    return v ? to_int(key, *v) : fallback;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto v = raw(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    throw ValidationError("config key '" + key + "': expected boolean, got '" + *v + "'");
  }

  std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const {
    auto v = raw(key);
    if (!v) return fallback;
    std::vector<double> out;
    for (const auto& item : split_list(*v)) out.push_back(to_double(key, item));
    return out;
  }

  std::vector<std::string> get_strings(const std::string& key, std::vector<std::string> fallback) const {
    auto v = raw(key);
    return v ? split_list(*v) : fallback;
  }

  static std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  static double to_double(const std::string& key, const std::string& text) {
    if (text == "inf" || text == "+inf") return kInf;
    double out = 0.0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, out);
    if (ec != std::errc() || ptr != end) {
      throw ValidationError("config key '" + key + "': expected number, got '" + text + "'");
    }
    return out;
  }

  static std::int64_t to_int(const std::string& key, const std::string& text) {
    std::int64_t out = 0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, out);
    if (ec != std::errc() || ptr != end) {
      throw ValidationError("config key '" + key + "': expected integer, got '" + text + "'");
    }
    return out;
  }

  std::map<std::string, std::string> values_;
  std::vector<std::string> order_;
};

} // namespace ctd
