#pragma once

// Flat key-value configuration files with [section] headers:
//
//   [experiment]
//   seed = 7
//   vaccines = BCG, MR1
//
// Keys are addressed as "section.key"; values are strings, numbers, flags
// (on/off/true/false/1/0), or comma-separated lists. '#' starts a comment.

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tabforge/common.hpp"

namespace tabforge::cfg {

namespace detail_cfg {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace detail_cfg

class ConfigMap {
 public:
  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string get_str(const std::string& key, const std::string& fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
  }

  std::string require_str(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw ConfigError("missing required config key: " + key);
    return it->second;
  }

  double get_num(const std::string& key, double fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
      std::size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + ": not a number: '" + it->second + "'");
    }
  }

  std::size_t get_size(const std::string& key, std::size_t fallback) const {
    const double v = get_num(key, static_cast<double>(fallback));
    if (v < 0 || v != std::floor(v))
      throw ConfigError("config key " + key + ": not a nonnegative integer");
    return static_cast<std::size_t>(v);
  }

  bool get_flag(const std::string& key, bool fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    const auto& v = it->second;
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    throw ConfigError("config key " + key + ": not a flag: '" + v + "'");
  }

  std::vector<std::string> get_list(const std::string& key,
                                    const std::vector<std::string>& fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    std::vector<std::string> out;
    std::istringstream is(it->second);
    std::string part;
    while (std::getline(is, part, ',')) {
      part = detail_cfg::trim(part);
      if (!part.empty()) out.push_back(part);
    }
    return out;
  }

  void set(const std::string& key, const std::string& value) { kv_[key] = value; }

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

inline ConfigMap parse_config(std::istream& in) {
  ConfigMap m;
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = detail_cfg::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(lineno) + ": unterminated section");
      section = detail_cfg::trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw ConfigError("config line " + std::to_string(lineno) + ": empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const auto key = detail_cfg::trim(line.substr(0, eq));
    const auto value = detail_cfg::trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    m.set(section.empty() ? key : section + "." + key, value);
  }
  return m;
}

inline ConfigMap parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  return parse_config(in);
}

}  // namespace tabforge::cfg
