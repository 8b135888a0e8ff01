#pragma once

#include <fbm/core/error.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fbm {

// Plain-text experiment configuration: `[section]` headers followed by
// `key = value` lines; `#` starts a comment. Keys are addressed as
// "section.key". Values may be bare, double-quoted, or `[a, b, c]` lists,
// which keeps the format a subset of TOML.
class Config {
 public:
  static Config parse(const std::string& text, const std::string& origin = "<string>") {
    Config cfg;
    std::istringstream is(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      line = strip_comment(line);
      line = trim(line);
      if (line.empty()) continue;
      const std::string where = origin + ":" + std::to_string(lineno);
      if (line.front() == '[') {
        if (line.back() != ']') throw UsageError(where + ": unterminated section header");
        section = trim(line.substr(1, line.size() - 2));
        if (section.empty()) throw UsageError(where + ": empty section name");
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw UsageError(where + ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = unquote(trim(line.substr(eq + 1)));
      if (key.empty()) throw UsageError(where + ": empty key");
      cfg.set(section.empty() ? key : section + "." + key, value);
    }
    return cfg;
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument(it->second);
      return v;
    } catch (const std::exception&) {
      throw UsageError("config key " + key + " expects a number, got '" + it->second + "'");
    }
  }

  long get_int(const std::string& key, long fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t pos = 0;
      const long v = std::stol(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument(it->second);
      return v;
    } catch (const std::exception&) {
      throw UsageError("config key " + key + " expects an integer, got '" + it->second + "'");
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw UsageError("config key " + key + " expects true/false, got '" + it->second + "'");
  }

  std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const {
    if (!has(key)) return fallback;
    std::vector<double> out;
    for (const std::string& item : split_list(values_.at(key))) {
      try {
        out.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw UsageError("config key " + key + " expects numbers, got '" + item + "'");
      }
    }
    return out;
  }

  std::vector<std::string> get_strings(const std::string& key,
                                       std::vector<std::string> fallback) const {
    if (!has(key)) return fallback;
    return split_list(values_.at(key));
  }

  const std::map<std::string, std::string>& values() const { return values_; }

  // Later values win.
  void merge(const Config& other) {
    for (const auto& [k, v] : other.values_) values_[k] = v;
  }

  // Renders back into sectioned text (sorted, deterministic).
  std::string to_text() const {
    std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections;
    for (const auto& [k, v] : values_) {
      const auto dot = k.find('.');
      if (dot == std::string::npos) {
        sections[""].emplace_back(k, v);
      } else {
        sections[k.substr(0, dot)].emplace_back(k.substr(dot + 1), v);
      }
    }
    std::ostringstream os;
    for (const auto& [name, kvs] : sections) {
      if (!name.empty()) os << "[" << name << "]\n";
      for (const auto& [k, v] : kvs) os << k << " = " << v << "\n";
      os << "\n";
    }
    return os.str();
  }

  static std::vector<std::string> split_list(std::string s) {
    s = trim(s);
    if (!s.empty() && s.front() == '[' && s.back() == ']') s = s.substr(1, s.size() - 2);
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = unquote(trim(item));
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

  static std::string trim(const std::string& s) {
    auto b = std::find_if_not(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
    auto e = std::find_if_not(s.rbegin(), s.rend(), [](unsigned char c) {
               return std::isspace(c);
             }).base();
    return b < e ? std::string(b, e) : std::string();
  }

 private:
  static std::string strip_comment(const std::string& s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '"') quoted = !quoted;
      if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
  }

  static std::string unquote(const std::string& s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
    return s;
  }

  std::map<std::string, std::string> values_;
};

}  // namespace fbm
