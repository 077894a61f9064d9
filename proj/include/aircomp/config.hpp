#pragma once

// Flat key=value configuration files with dotted keys, '#' comments and
// line-anchored diagnostics. Every lookup records the effective value so the
// fully resolved configuration can be written into a run manifest.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "aircomp/nn.hpp"

namespace aircomp {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Config {
 public:
  struct Entry {
    std::string value;
    std::size_t line = 0;
  };

  static Config parse(std::istream& is, std::string source = "<config>") {
    Config cfg;
    cfg.source_ = std::move(source);
    std::string raw;
    std::size_t line = 0;
    while (std::getline(is, raw)) {
      ++line;
      const auto hash = raw.find('#');
      std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
      if (text.empty()) continue;
      const auto eq = text.find('=');
      if (eq == std::string::npos) cfg.fail(line, "expected 'key=value', got '" + text + "'");
      std::string key = trim(text.substr(0, eq));
      std::string value = trim(text.substr(eq + 1));
      if (key.empty()) cfg.fail(line, "empty key");
      if (auto it = cfg.entries_.find(key); it != cfg.entries_.end()) {
        cfg.fail(line, "duplicate key '" + key + "' (first set on line " + std::to_string(it->second.line) + ")");
      }
      cfg.entries_[key] = {value, line};
    }
    return cfg;
  }

  static Config parse_string(const std::string& text, std::string source = "<config>") {
    std::istringstream is(text);
    return parse(is, std::move(source));
  }

  static Config load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError(path + ": cannot open config file");
    return parse(is, path);
  }

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  const std::string& source() const noexcept { return source_; }

  /// Sets or overrides a value (command-line flags).
  void set(const std::string& key, std::string value) { entries_[key] = {std::move(value), 0}; }

  template <typename T>
  T get(const std::string& key, const T& fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) {
      resolved_[key] = render(fallback);
      return fallback;
    }
    T v = convert<T>(key, it->second);
    resolved_[key] = it->second.value;
    return v;
  }

  template <typename T>
  T require(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError(source_ + ": missing required key '" + key + "'");
    T v = convert<T>(key, it->second);
    resolved_[key] = it->second.value;
    return v;
  }

  /// Throws listing every missing key by name.
  void require_keys(const std::vector<std::string>& keys) const {
    std::string missing;
    for (const auto& k : keys) {
      if (!has(k)) missing += (missing.empty() ? "" : ", ") + k;
    }
    if (!missing.empty()) throw ConfigError(source_ + ": missing required key(s): " + missing);
  }

  /// Rejects keys outside `known`, pointing at the offending line.
  void reject_unknown(const std::set<std::string>& known) const {
    for (const auto& [key, entry] : entries_) {
      if (!known.count(key)) fail(entry.line, "unknown key '" + key + "'");
    }
  }

  /// Effective values of every key looked up so far plus any set but unread.
  std::map<std::string, std::string> resolved() const {
    std::map<std::string, std::string> out = resolved_;
    for (const auto& [k, e] : entries_) out.emplace(k, e.value);
    return out;
  }

 private:
  static std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
  }

  [[noreturn]] void fail(std::size_t line, const std::string& msg) const {
    if (line == 0) throw ConfigError(source_ + ": " + msg);
    throw ConfigError(source_ + ":" + std::to_string(line) + ": " + msg);
  }

  template <typename T>
  T convert(const std::string& key, const Entry& e) const {
    try {
      return parse_value<T>(e.value);
    } catch (const std::exception& ex) {
      fail(e.line, "key '" + key + "': " + ex.what());
    }
  }

  template <typename T>
  static T parse_value(const std::string& s) {
    if constexpr (std::is_same_v<T, std::string>) {
      return s;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (s == "true" || s == "1" || s == "yes") return true;
      if (s == "false" || s == "0" || s == "no") return false;
      throw std::invalid_argument("cannot parse '" + s + "' as boolean");
    } else if constexpr (std::is_same_v<T, double>) {
      return parse_real(s);
    } else if constexpr (std::is_integral_v<T>) {
      if (s.empty() || (std::is_unsigned_v<T> && s.front() == '-')) {
        throw std::invalid_argument("cannot parse '" + s + "' as non-negative integer");
      }
      T v{};
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw std::invalid_argument("cannot parse '" + s + "' as integer");
      }
      return v;
    } else if constexpr (std::is_same_v<T, std::vector<double>>) {
      std::vector<double> out;
      for (const auto& tok : split_list(s)) out.push_back(parse_real(tok));
      return out;
    } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
      std::vector<std::size_t> out;
      for (const auto& tok : split_list(s)) out.push_back(parse_value<std::size_t>(tok));
      return out;
    } else {
      static_assert(sizeof(T) == 0, "unsupported config value type");
    }
  }

  static double parse_real(const std::string& s) {
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    return nn::parse_double(s);
  }

  template <typename T>
  static std::string render(const T& v) {
    if constexpr (std::is_same_v<T, std::string>) {
      return v;
    } else if constexpr (std::is_same_v<T, bool>) {
      return v ? "true" : "false";
    } else if constexpr (std::is_same_v<T, double>) {
      return nn::format_double(v);
    } else if constexpr (std::is_integral_v<T>) {
      return std::to_string(v);
    } else {
      std::string out;
      for (const auto& x : v) {
        if (!out.empty()) out += ',';
        if constexpr (std::is_same_v<std::decay_t<decltype(x)>, double>) {
          out += nn::format_double(x);
        } else {
          out += std::to_string(x);
        }
      }
      return out;
    }
  }

 public:
  static std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string tok;
    std::istringstream is(s);
    while (std::getline(is, tok, ',')) {
      tok = trim(tok);
      if (!tok.empty()) out.push_back(tok);
    }
    return out;
  }

 private:
  std::string source_;
  std::map<std::string, Entry> entries_;
  mutable std::map<std::string, std::string> resolved_;
};

}  // namespace aircomp
